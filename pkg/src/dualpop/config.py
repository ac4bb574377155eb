"""Run configuration: key=value files with CLI overrides, typed per experiment."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["RunConfig", "ConfigError", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "runs"
    fmt: str = "csv"

    def out_path(self) -> Path:
        return Path(self.out_dir)


_RESERVED = {"experiment", "seed", "out", "format"}


def _cast(key: str, raw: str, want: type, where: str):
    try:
        if want is int:
            return int(raw)
        if want is float:
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(
            f"{where}: value {raw!r} for key {key!r} is not a valid {want.__name__}"
        ) from None


def parse_config(
    schema: dict[str, tuple[type, object]],
    text: str = "",
    overrides: dict[str, str] | None = None,
    experiment: str = "",
    seed: int | None = None,
    out_dir: str | None = None,
    fmt: str | None = None,
) -> RunConfig:
    """Build a RunConfig from key=value lines plus flat CLI overrides.

    ``schema`` maps parameter names to (type, default).  File values are
    applied first, then overrides.  Unknown keys and type mismatches raise
    ConfigError naming the key and (for file input) the line number.
    """
    params = {k: default for k, (_, default) in schema.items()}
    meta: dict[str, str] = {}

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        where = f"line {lineno}"
        if key in _RESERVED:
            meta[key] = raw
        elif key in schema:
            params[key] = _cast(key, raw, schema[key][0], where)
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")

    for key, raw in (overrides or {}).items():
        if key in _RESERVED:
            meta[key] = raw
        elif key in schema:
            params[key] = _cast(key, raw, schema[key][0], "override")
        else:
            raise ConfigError(f"override: unknown key {key!r}")

    name = experiment or meta.get("experiment", "")
    if not name:
        raise ConfigError("missing experiment name (set --experiment or experiment=...)")
    final_seed = seed if seed is not None else int(meta.get("seed", "0"))
    final_out = out_dir if out_dir is not None else meta.get("out", "runs")
    final_fmt = fmt if fmt is not None else meta.get("format", "csv")
    if final_fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {final_fmt!r}")
    return RunConfig(experiment=name, params=params, seed=final_seed,
                     out_dir=final_out, fmt=final_fmt)
