"""Deterministic CSV/JSON artifact writers.

Every artifact embeds the config echo, the master seed and the artifact
version, and floats are rendered with repr (shortest round-trip), so a fixed
(config, seed) pair produces byte-identical files on one platform.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from . import __version__

__all__ = ["format_value", "write_csv", "write_json", "provenance"]


def format_value(v) -> str:
    import numpy as np

    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def provenance(config) -> dict:
    return {
        "experiment": config.experiment,
        "seed": config.seed,
        "params": dict(sorted(config.params.items())),
        "artifact_version": __version__,
    }


def write_csv(path: Path, header: list[str], rows, config) -> Path | None:
    """RFC-4180-style CSV: header row, '.' decimals, LF endings.

    Provenance is embedded as leading comment lines so the data block stays a
    plain CSV table.  Skipped (returns None) for json-format runs, which keep
    only the JSON manifest.
    """
    if getattr(config, "fmt", "csv") == "json":
        return None
    path.parent.mkdir(parents=True, exist_ok=True)
    prov = provenance(config)
    with open(path, "w", newline="") as f:
        for key in ("experiment", "seed", "artifact_version"):
            f.write(f"# {key} = {prov[key]}\n")
        f.write(f"# params = {json.dumps(prov['params'], sort_keys=True)}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_json(path: Path, results: dict, config) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": provenance(config), "seed": config.seed, "results": results}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")
    return path


def _jsonable(v):
    try:
        import numpy as np
        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        if isinstance(v, np.bool_):
            return bool(v)
    except ImportError:
        pass
    raise TypeError(f"not JSON-serializable: {type(v)}")
