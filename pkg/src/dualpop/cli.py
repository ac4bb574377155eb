"""Command-line entry point.

    dualpop run --experiment <name> [--config file] [--<key> <value>]...
                [--seed <u64>] [--out <dir>] [--format csv|json]
    dualpop list
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .experiments import (EXPERIMENTS, UnknownExperimentError, experiment_names,
                          experiment_schema, run_experiment)


def _collect_overrides(extra: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            value = extra[i + 1]
            i += 1
        overrides[key] = value
        i += 1
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dualpop")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a registered experiment")
    run_p.add_argument("--experiment", default="")
    run_p.add_argument("--config", default=None, help="key=value config file")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--format", dest="fmt", choices=("csv", "json"), default=None)

    sub.add_parser("list", help="list registered experiments")

    args, extra = parser.parse_known_args(argv)

    if args.command == "list":
        for name in experiment_names():
            print(f"{name:24s} {EXPERIMENTS[name][2]}")
        return 0

    try:
        overrides = _collect_overrides(extra)
        text = Path(args.config).read_text() if args.config else ""
        name = args.experiment or overrides.pop("experiment", "")
        if not name:
            # allow the file to carry the experiment name
            for line in text.splitlines():
                stripped = line.split("#", 1)[0].strip()
                if stripped.startswith("experiment"):
                    name = stripped.split("=", 1)[1].strip()
                    break
        if not name:
            raise ConfigError("missing experiment name (use --experiment)")
        schema = experiment_schema(name)
        cfg = parse_config(schema, text=text, overrides=overrides, experiment=name,
                           seed=args.seed, out_dir=args.out, fmt=args.fmt)
        results = run_experiment(cfg)
    except (ConfigError, UnknownExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"experiment": cfg.experiment, "seed": cfg.seed,
                      "out": cfg.out_dir, "results": results},
                     indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
