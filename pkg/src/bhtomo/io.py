"""CSV tables and the JSON run manifest.

Every table has a registered column layout. The manifest schema version is a
digest of the full layout registry, so it changes exactly when some layout
changes. CSV bodies contain no timestamps and use shortest round-trip float
formatting, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

# ``{L}`` marks a block of per-site columns ``name_1 .. name_L``
LAYOUTS: dict[str, tuple[str, ...]] = {
    "bogoliubov_scan": ("u", "q", "re_omega", "im_omega", "classification"),
    "stability_diagram": ("phi", "u", "class", "gamma_o"),
    "stability_boundaries": ("u", "phi", "from", "to"),
    "critical_values": ("name", "value"),
    "sp_continuation": ("u", "mu", "e_kin", "n_SP", "p_{L}"),
    "spectrum": ("sector", "nu", "E"),
    "hamiltonian": ("row", "col", "re", "im"),
    "tomography": ("sector", "nu", "E", "n_o_mean", "purity", "inv_purity"),
    "trajectory": ("t", "n_{L}"),
    "trajectory_quality": ("traj", "E", "norm_drift", "energy_drift"),
    "lyapunov": ("kind", "gamma", "plateau_std", "flagged"),
    "ergodicity_map": ("n_o_init", "n_o_mean"),
    "sigma_scan": ("u", "sigma", "n_states", "low_statistics"),
    "microcanonical": ("u", "n_o", "P_E"),
    "fingerprint_scan": ("control_param", "n_max", "S_max", "nu"),
    "phonon_classify": ("nu", "E", "n_phonons", "weight"),
    "sweep_points": ("point", "params", "status", "message"),
}


def schema_version(layouts: dict | None = None) -> str:
    """Short digest of the column layouts."""
    layouts = LAYOUTS if layouts is None else layouts
    blob = json.dumps({k: list(v) for k, v in sorted(layouts.items())}, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def columns(table: str, L: int | None = None, prefix: tuple[str, ...] = ()) -> list[str]:
    """Concrete header of ``table``; per-site blocks need ``L``."""
    out = list(prefix)
    for c in LAYOUTS[table]:
        if c.endswith("_{L}"):
            if L is None:
                raise ValueError(f"table {table} needs the number of sites")
            stem = c[: -len("_{L}")]
            out.extend(f"{stem}_{j}" for j in range(1, L + 1))
        else:
            out.append(c)
    return out


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if x == 0.0:
            return "0.0"  # drop the sign of negative zero
        return repr(x)
    return str(x)


def write_csv(path, table: str, rows, *, L: int | None = None, prefix: tuple[str, ...] = ()) -> dict:
    """Write ``rows`` under the registered header; returns a manifest entry."""
    path = Path(path)
    header = columns(table, L, prefix)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            row = list(row)
            if len(row) != len(header):
                raise ValueError(f"{table}: row has {len(row)} fields, header has {len(header)}")
            w.writerow([format_value(x) for x in row])
            n += 1
    return {"path": path.name, "table": table, "columns": header, "rows": n, "sha256": file_digest(path)}


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_manifest(outdir, task: str, config: dict, artifacts: list[dict], **extra) -> Path:
    """Sidecar ``manifest.json``; the only file that carries a timestamp."""
    from . import __version__

    outdir = Path(outdir)
    data = {
        "schema_version": schema_version(),
        "package_version": __version__,
        "task": task,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": _jsonable(config),
        "artifacts": _jsonable(artifacts),
    }
    data.update(_jsonable(extra))
    path = outdir / "manifest.json"
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def default_output_dir() -> Path:
    return Path(os.environ.get("BHTOMO_OUTPUT_DIR", "bhtomo-output"))
