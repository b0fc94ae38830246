"""Command-line entry point: configuration, task dispatch and parameter sweeps.

Usage::

    bhtomo <task> [--config FILE] [model flags] [--set key=value ...] [--out DIR]
    bhtomo sweep <task> --grid key=start:stop:num [--grid ...] [...]
    bhtomo report DIR

Exit codes: 0 ok, 2 configuration error, 3 resource cap, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import io
from .bogoliubov import (
    PairingError,
    bogoliubov_spectrum,
    critical_u,
    phi_c_es,
    stability_diagram,
)
from .dynamics import (
    DEFAULT_T,
    DRIFT_TOL,
    DriftError,
    ShellSamplingError,
    classical_tomography,
    ergodicity_map,
    integrate,
    launch_state,
    sample_energy_shell,
    sample_phase_space,
    sp_and_sea_lyapunov,
)
from .ergodicity import fingerprint, phonon_analysis, sigma_at_sp
from .fock import DEFAULT_BLOCK_CAP, DimensionError, default_sector, make_block, build_hamiltonian, parse_sector
from .lattice import Geometry, Model, build_model
from .stationary import ContinuationError, continuation_path, continue_sp, mu_decomposition, sp_orbital_occupations
from .tomography import DiagonalizationError, tomographic_spectrum

log = logging.getLogger("bhtomo")

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_NUMERICAL = 0, 2, 3, 4
NUMERICAL_ERRORS = (
    ContinuationError,
    DiagonalizationError,
    DriftError,
    PairingError,
    ShellSamplingError,
    np.linalg.LinAlgError,
    ArithmeticError,
)
MODEL_KEYS = ("geometry", "L_s", "N", "u", "phi", "m_o", "K")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter parsing


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def parse_scalar(text) -> float:
    """Number with an optional ``pi`` factor: ``2.5pi``, ``pi``, ``-0.5``."""
    if isinstance(text, (int, float)):
        return float(text)
    t = str(text).strip().replace(" ", "")
    m = re.fullmatch(rf"({_NUM})?\*?(pi)?", t)
    if not m or (m.group(1) is None and m.group(2) is None):
        raise ConfigError(f"cannot parse number {text!r}")
    val = float(m.group(1)) if m.group(1) is not None else 1.0
    return val * math.pi if m.group(2) else val


def parse_grid(spec) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace), a comma list, a list or a scalar."""
    if isinstance(spec, (list, tuple, np.ndarray)):
        vals = [parse_scalar(v) for v in spec]
    elif isinstance(spec, (int, float)):
        vals = [float(spec)]
    else:
        s = str(spec).strip()
        if s.count(":") == 2:
            a, b, n = s.split(":")
            try:
                num = int(n)
            except ValueError as exc:
                raise ConfigError(f"grid count must be an integer in {spec!r}") from exc
            if num < 1:
                raise ConfigError(f"grid {spec!r} is empty")
            vals = list(np.linspace(parse_scalar(a), parse_scalar(b), num))
        else:
            vals = [parse_scalar(v) for v in s.split(",") if v.strip()]
    if not vals:
        raise ConfigError(f"grid {spec!r} is empty")
    return np.array(vals, dtype=float)


def _int(v):
    if isinstance(v, bool) or float(v) != int(float(v)):
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(float(v))


def _pos_float(v):
    x = parse_scalar(v)
    if not x > 0:
        raise ConfigError(f"expected a positive number, got {v!r}")
    return x


def _opt_float(v):
    return None if v is None else parse_scalar(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes", "on"):
        return True
    if str(v).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _sectors(v):
    if v is None or v == "all":
        return v
    if isinstance(v, (list, tuple)):
        return list(v)
    if isinstance(v, str) and "," in v:
        return [x.strip() for x in v.split(",")]
    return [v]


def _choice(*options):
    def conv(v):
        if v not in options:
            raise ConfigError(f"expected one of {options}, got {v!r}")
        return v
    return conv


# task name -> {param: (converter, default)}
TASK_PARAMS: dict[str, dict] = {
    "bogoliubov-scan": {"u_grid": (parse_grid, "0:5:51"), "critical": (_bool, True)},
    "stability-diagram": {
        "u_grid": (parse_grid, "0.5:4:8"),
        "phi_grid": (parse_grid, "0:4pi:41"),
        "tol": (_pos_float, 1e-6),
    },
    "sp-continuation": {"u_grid": (parse_grid, "0:5:21")},
    "spectrum": {"sectors": (_sectors, None), "cap": (_int, DEFAULT_BLOCK_CAP), "dump_hamiltonian": (_bool, False)},
    "tomography-quantum": {"sectors": (_sectors, None), "cap": (_int, DEFAULT_BLOCK_CAP)},
    "tomography-classical": {
        "samples": (_int, 200),
        "T": (_pos_float, DEFAULT_T),
        "dt": (_opt_float, None),
        "shell_E": (_opt_float, None),
        "shell_window": (_pos_float, 0.02),
    },
    "trajectories": {
        "count": (_int, 1),
        "T": (_pos_float, DEFAULT_T),
        "dt": (_opt_float, None),
        "n_o_init": (parse_scalar, 0.95),
        "record_dt": (_pos_float, 1.0),
        "lyapunov": (_bool, False),
        "lyapunov_T": (_pos_float, 2000.0),
    },
    "ergodicity-map": {
        "n_o_grid": (parse_grid, "0:1:11"),
        "T": (_pos_float, DEFAULT_T),
        "seeds": (_int, 8),
        "dt": (_opt_float, None),
    },
    "sigma-scan": {
        "u_grid": (parse_grid, None),
        "sectors": (_sectors, None),
        "half_width": (_opt_float, None),
        "cap": (_int, DEFAULT_BLOCK_CAP),
    },
    "fingerprint-scan": {
        "control": (_choice("u", "phi"), "u"),
        "grid": (parse_grid, None),
        "sectors": (_sectors, None),
        "cap": (_int, DEFAULT_BLOCK_CAP),
    },
    "phonon-classify": {
        "reference": (_choice("ground", "excited"), "ground"),
        "n_states": (_int, 40),
        "max_phonons": (_int, 3),
        "cap": (_int, DEFAULT_BLOCK_CAP),
    },
}


@dataclass
class RunConfig:
    task: str
    geometry: str = "chain"
    L_s: int = 5
    N: int = 20
    u: float = 0.0
    phi: float = 0.0
    m_o: int = 1
    K: float = 1.0
    params: dict = field(default_factory=dict)
    output: Path | None = None
    seed: int = 0
    workers: int = 1
    report: bool = False

    def model(self) -> Model:
        return build_model(self.geometry, self.L_s, self.N, self.K, Phi=self.phi, u=self.u)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("task",) + MODEL_KEYS}
        d.update(params=self.params, seed=self.seed, workers=self.workers)
        return d


def validate(cfg: RunConfig) -> RunConfig:
    """Check the model block and resolve task parameters; raises :class:`ConfigError`."""
    if cfg.task not in TASK_PARAMS:
        raise ConfigError(f"unknown task {cfg.task!r}; choose from {sorted(TASK_PARAMS)}")
    try:
        Geometry.parse(cfg.geometry)
        cfg = replace(
            cfg,
            L_s=_int(cfg.L_s),
            N=_int(cfg.N),
            u=parse_scalar(cfg.u),
            phi=parse_scalar(cfg.phi),
            m_o=_int(cfg.m_o),
            K=_pos_float(cfg.K),
            seed=_int(cfg.seed),
            workers=max(1, _int(cfg.workers)),
        )
        model = cfg.model()
        if not model.is_ring and not 1 <= cfg.m_o <= cfg.L_s:
            raise ConfigError(f"chain orbital m_o must be in 1..{cfg.L_s}")
        spec = TASK_PARAMS[cfg.task]
        unknown = set(cfg.params) - set(spec)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {cfg.task}: {sorted(unknown)}")
        params = {}
        for name, (conv, default) in spec.items():
            raw = cfg.params.get(name, default)
            params[name] = None if raw is None else conv(raw)
        for key in ("sectors",):
            if params.get(key) not in (None, "all"):
                params[key] = [parse_sector(model, s) for s in params[key]]
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return replace(cfg, params=params)


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())  # JSON is a subset of YAML
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def config_from_mapping(data: dict, task: str | None = None) -> tuple[RunConfig, dict]:
    """Build a :class:`RunConfig` (and sweep grid) from a parsed config mapping."""
    data = dict(data)
    model = dict(data.pop("model", {}) or {})
    task = task or data.pop("task", None)
    data.pop("task", None)
    if task is None:
        raise ConfigError("no task given")
    bad = set(model) - set(MODEL_KEYS)
    if bad:
        raise ConfigError(f"unknown model keys {sorted(bad)}")
    grid = data.pop("grid", {}) or {}
    kw = {k: model[k] for k in MODEL_KEYS if k in model}
    for k in ("seed", "workers", "report"):
        if k in data:
            kw[k] = data.pop(k)
    if "output" in data:
        kw["output"] = Path(data.pop("output"))
    params = data.pop("params", {}) or {}
    if data:
        raise ConfigError(f"unknown config keys {sorted(data)}")
    return RunConfig(task=task, params=dict(params), **kw), dict(grid)


# ---------------------------------------------------------------------------
# tasks


@dataclass
class Table:
    filename: str
    table: str
    rows: list
    L: int | None = None


def _pmap(func, items, workers: int):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            return list(pool.map(func, items))
    return [func(x) for x in items]


def _ascending(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ConfigError("u grids must be ascending for continuation")
    if np.any(grid < 0):
        raise ConfigError("u must be non-negative")
    return grid


def task_bogoliubov_scan(cfg: RunConfig) -> list[Table]:
    model = cfg.model()
    u_grid = _ascending(cfg.params["u_grid"])
    rows = []
    for sp in continuation_path(model, cfg.m_o, u_grid):
        m = model.with_u(sp.u)
        spec = bogoliubov_spectrum(m, sp)
        for q, w in enumerate(spec.omega):
            rows.append((sp.u, q, w.real, w.imag, spec.classification.value))
    tables = [Table("bogoliubov_scan.csv", "bogoliubov_scan", rows)]
    if cfg.params["critical"] and not model.is_ring:
        uc = critical_u(model, cfg.m_o, u_cap=float(u_grid.max()))
        tables.append(Table("critical_values.csv", "critical_values", [("u_c", uc)]))
    return tables


def task_stability_diagram(cfg: RunConfig) -> list[Table]:
    model = cfg.model()
    p = cfg.params
    if model.is_ring:
        d = stability_diagram(model, cfg.m_o, p["u_grid"], p["phi_grid"], tol=p["tol"])
        rows = [
            (phi, u, d.classes[a, b], d.gamma[a, b])
            for a, u in enumerate(d.u)
            for b, phi in enumerate(d.phi)
        ]
        bounds = [(b["u"], b["phi"], b["from"], b["to"]) for b in d.boundaries]
        crit = [(f"phi_c_es(u={u:g})", phi_c_es(u, model.L)) for u in d.u] if cfg.m_o == 0 else []
    else:
        d = stability_diagram(model, cfg.m_o, _ascending(p["u_grid"]), tol=p["tol"])
        rows = [(math.nan, u, c, g) for u, c, g in zip(d.u, d.classes, d.gamma)]
        bounds = [(b["u"], math.nan, b["from"], b["to"]) for b in d.boundaries]
        crit = [("u_c", b["u"]) for b in d.boundaries if b["to"] == "Unstable"][:1]
    return [
        Table("stability_diagram.csv", "stability_diagram", rows),
        Table("stability_boundaries.csv", "stability_boundaries", bounds),
        Table("critical_values.csv", "critical_values", crit),
    ]


def task_sp_continuation(cfg: RunConfig) -> list[Table]:
    model = cfg.model()
    rows = []
    for sp in continuation_path(model, cfg.m_o, _ascending(cfg.params["u_grid"])):
        m = model.with_u(sp.u)
        _, n_sp = sp_orbital_occupations(sp, m)
        rows.append((sp.u, sp.mu, mu_decomposition(sp, m).e_kin, n_sp, *sp.density))
    return [Table("sp_continuation.csv", "sp_continuation", rows, L=model.L_s)]


def _sector_arg(model, sectors):
    return [default_sector(model)] if sectors is None else sectors


def task_spectrum(cfg: RunConfig) -> list[Table]:
    from .tomography import diagonalize
    from .fock import sector_name, symmetry_blocks, enumerate_basis

    model = cfg.model()
    p = cfg.params
    sectors = p["sectors"]
    if sectors == "all":
        sectors = sorted(symmetry_blocks(model, enumerate_basis(model)))
    tables, rows = [], []
    for s in _sector_arg(model, sectors):
        block = build_hamiltonian(model, make_block(model, s, cap=p["cap"]))
        es = diagonalize(block)
        name = sector_name(model, block.label)
        rows.extend((name, nu, E) for nu, E in enumerate(es.energies))
        if p["dump_hamiltonian"]:
            r, c = np.nonzero(block.H)
            v = block.H[r, c]
            tables.append(Table(f"hamiltonian_{name}.csv", "hamiltonian",
                                list(zip(r, c, np.real(v), np.imag(v)))))
    return [Table("spectrum.csv", "spectrum", rows)] + tables


def _tomo_rows(points):
    return [(p.sector, p.nu, p.E, p.n_o_mean, p.purity, p.inverse_purity) for p in points]


def task_tomography_quantum(cfg: RunConfig) -> list[Table]:
    model = cfg.model()
    sectors = cfg.params["sectors"]
    pts = tomographic_spectrum(model, cfg.m_o, sectors, cap=cfg.params["cap"])
    return [Table("tomography.csv", "tomography", _tomo_rows(pts))]


def _check_drifts(norm, energy):
    bad = (np.asarray(norm) > DRIFT_TOL) | (np.asarray(energy) > DRIFT_TOL)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DriftError(
            f"trajectory {i} drifted (norm {norm[i]:.2e}, energy {energy[i]:.2e}); lower dt",
            float(norm[i]), float(energy[i]),
        )


def task_tomography_classical(cfg: RunConfig) -> list[Table]:
    model = cfg.model()
    p = cfg.params
    if p["shell_E"] is None:
        samples = sample_phase_space(model, p["samples"], cfg.seed)
    else:
        samples = sample_energy_shell(model, p["shell_E"], p["shell_window"], p["samples"], cfg.seed)
    arr = classical_tomography(model, samples, cfg.m_o, p["T"], dt=p["dt"], workers=cfg.workers)
    _check_drifts(arr[:, 3], arr[:, 4])
    rows = [("classical", i, E, n, S, 1.0 / S) for i, (E, n, S, _, _) in enumerate(arr)]
    quality = [(i, E, nd, ed) for i, (E, _, _, nd, ed) in enumerate(arr)]
    return [
        Table("tomography.csv", "tomography", rows),
        Table("trajectory_quality.csv", "trajectory_quality", quality),
    ]


def task_trajectories(cfg: RunConfig) -> list[Table]:
    model = cfg.model()
    p = cfg.params
    sp = continue_sp(model, cfg.m_o)
    ss = np.random.SeedSequence(cfg.seed)
    tables, quality = [], []
    for i, child in enumerate(ss.spawn(p["count"])):
        psi0 = launch_state(model, cfg.m_o, p["n_o_init"], np.random.default_rng(child), sp)
        traj = integrate(model, psi0, p["T"], p["dt"], record_dt=p["record_dt"])
        rows = [(t, *n) for t, n in zip(traj.times, traj.n_k_t)]
        tables.append(Table(f"trajectory_{i:03d}.csv", "trajectory", rows, L=model.L_s))
        quality.append((i, traj.energy * model.N, traj.norm_drift, traj.energy_drift))
    tables.append(Table("trajectory_quality.csv", "trajectory_quality", quality))
    if p["lyapunov"]:
        g_sp, g_cs = sp_and_sea_lyapunov(model, cfg.m_o, p["lyapunov_T"], seed=cfg.seed, sp=sp)
        g_o = bogoliubov_spectrum(model, sp).gamma_o
        rows = [("o", g_o, 0.0, False), ("SP", g_sp.gamma, g_sp.plateau_std, g_sp.flagged)]
        rows += [(f"CS{j}", g.gamma, g.plateau_std, g.flagged) for j, g in enumerate(g_cs)]
        tables.append(Table("lyapunov.csv", "lyapunov", rows))
    return tables


def task_ergodicity_map(cfg: RunConfig) -> list[Table]:
    p = cfg.params
    grid, vals = ergodicity_map(cfg.model(), cfg.m_o, p["n_o_grid"], p["T"],
                                seeds=p["seeds"], master_seed=cfg.seed, dt=p["dt"])
    return [Table("ergodicity_map.csv", "ergodicity_map", list(zip(grid, vals)))]


def _sigma_task(args):
    model, m_o, sectors, half_width, cap = args
    sigma, win, PE = sigma_at_sp(model, m_o, sectors, half_width=half_width, cap=cap)
    return sigma, len(win.members), win.low_statistics, PE


def task_sigma_scan(cfg: RunConfig) -> list[Table]:
    model = cfg.model()
    p = cfg.params
    grid = p["u_grid"] if p["u_grid"] is not None else np.array([model.u])
    jobs = [(model.with_u(u), cfg.m_o, p["sectors"], p["half_width"], p["cap"]) for u in grid]
    res = _pmap(_sigma_task, jobs, cfg.workers)
    rows = [(u, s, n, low) for u, (s, n, low, _) in zip(grid, res)]
    dist = [(u, k, P) for u, r in zip(grid, res) for k, P in enumerate(r[3])]
    return [Table("sigma_scan.csv", "sigma_scan", rows), Table("microcanonical.csv", "microcanonical", dist)]


def _fingerprint_task(args):
    model, m_o, sectors, cap = args
    f = fingerprint(model, m_o, sectors, cap=cap)
    return f.n_max, f.S_max, f.nu


def task_fingerprint_scan(cfg: RunConfig) -> list[Table]:
    model = cfg.model()
    p = cfg.params
    if p["control"] == "phi":
        grid = p["grid"] if p["grid"] is not None else np.array([model.Phi])
        models = [model.with_phi(x) for x in grid]
    else:
        grid = p["grid"] if p["grid"] is not None else np.array([model.u])
        models = [model.with_u(x) for x in grid]
    res = _pmap(_fingerprint_task, [(m, cfg.m_o, p["sectors"], p["cap"]) for m in models], cfg.workers)
    rows = [(x, *r) for x, r in zip(grid, res)]
    return [Table("fingerprint_scan.csv", "fingerprint_scan", rows)]


def task_phonon_classify(cfg: RunConfig) -> list[Table]:
    p = cfg.params
    a = phonon_analysis(cfg.model(), cfg.m_o, reference=p["reference"], n_states=p["n_states"],
                        max_phonons=p["max_phonons"], cap=p["cap"])
    rows = [(nu, E, lab.n_phonons, lab.weight) for nu, (E, lab) in enumerate(zip(a.energies, a.labels))]
    return [Table("phonon_classify.csv", "phonon_classify", rows)]


TASKS = {
    "bogoliubov-scan": task_bogoliubov_scan,
    "stability-diagram": task_stability_diagram,
    "sp-continuation": task_sp_continuation,
    "spectrum": task_spectrum,
    "tomography-quantum": task_tomography_quantum,
    "tomography-classical": task_tomography_classical,
    "trajectories": task_trajectories,
    "ergodicity-map": task_ergodicity_map,
    "sigma-scan": task_sigma_scan,
    "fingerprint-scan": task_fingerprint_scan,
    "phonon-classify": task_phonon_classify,
}


# ---------------------------------------------------------------------------
# run, sweep, report


def _write_tables(outdir: Path, tables: list[Table]) -> list[dict]:
    return [io.write_csv(outdir / t.filename, t.table, t.rows, L=t.L) for t in tables]


def _output_dir(cfg: RunConfig) -> Path:
    out = cfg.output if cfg.output is not None else io.default_output_dir()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run(cfg: RunConfig) -> Path:
    """Validate, execute one task and write its tables plus the manifest."""
    cfg = validate(cfg)
    outdir = _output_dir(cfg)
    tables = TASKS[cfg.task](cfg)
    arts = _write_tables(outdir, tables)
    io.write_manifest(outdir, cfg.task, cfg.as_dict(), arts)
    if cfg.report:
        from .plotting import render_report
        render_report(outdir)
    return outdir


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of parameter grids, in key order then value order."""
    if not grid:
        raise ConfigError("empty sweep grid")
    keys = list(grid)
    values = []
    for k in keys:
        v = grid[k]
        if k in ("geometry", "sectors", "reference", "control"):
            values.append(list(v) if isinstance(v, (list, tuple)) else [v])
        else:
            values.append(list(parse_grid(v)))
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def _apply_point(cfg: RunConfig, point: dict) -> RunConfig:
    params = dict(cfg.params)
    kw = {}
    for k, v in point.items():
        if k in MODEL_KEYS:
            kw[k] = v
        elif k in TASK_PARAMS[cfg.task]:
            params[k] = v
        else:
            raise ConfigError(f"sweep key {k!r} is neither a model key nor a {cfg.task} parameter")
    return replace(cfg, params=params, workers=1, **kw)


def _sweep_point(args):
    cfg, point = args
    try:
        c = validate(_apply_point(cfg, point))
        return "ok", "", TASKS[c.task](c)
    except DimensionError as exc:
        return "resource", str(exc), None
    except ConfigError as exc:
        return "config", str(exc), None
    except Exception as exc:  # recorded per point; the sweep carries on
        return type(exc).__name__, str(exc), None


def sweep(cfg: RunConfig, grid: dict) -> tuple[Path, int]:
    """Run ``cfg`` at every grid point; returns the output dir and the failure count.

    Tables with the same file name are concatenated in grid order, so a
    single-point sweep reproduces the plain run byte for byte.
    """
    points = expand_grid(grid)
    for pt in points:
        validate(_apply_point(cfg, pt))  # fail fast on configuration errors
    outdir = _output_dir(cfg)
    results = _pmap(_sweep_point, [(cfg, pt) for pt in points], cfg.workers)
    merged: dict[str, Table] = {}
    status = []
    for i, (pt, (state, msg, tables)) in enumerate(zip(points, results)):
        status.append((i, json.dumps(io._jsonable(pt), sort_keys=True), state, msg))
        for t in tables or []:
            if t.filename not in merged:
                merged[t.filename] = Table(t.filename, t.table, [], t.L)
            merged[t.filename].rows.extend(t.rows)
    arts = _write_tables(outdir, list(merged.values()))
    failures = sum(s[2] != "ok" for s in status)
    manifest_arts = arts
    if failures:
        manifest_arts = arts + [io.write_csv(outdir / "sweep_points.csv", "sweep_points", status)]
    io.write_manifest(outdir, cfg.task, cfg.as_dict(), manifest_arts,
                      sweep={"grid": io._jsonable(grid), "points": len(points), "failures": failures})
    if cfg.report:
        from .plotting import render_report
        render_report(outdir)
    return outdir, failures


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON run configuration")
    g = p.add_argument_group("model")
    g.add_argument("--geometry", choices=["ring", "chain"])
    g.add_argument("--L-s", dest="L_s", type=int)
    g.add_argument("--N", type=int)
    g.add_argument("--u", help="interaction u = NU/K")
    g.add_argument("--phi", help="Sagnac phase of a ring (accepts e.g. 2.5pi)")
    g.add_argument("--m-o", dest="m_o", type=int, help="inspected orbital")
    g.add_argument("--K", help="hopping amplitude")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="task parameter (repeatable)")
    p.add_argument("--out", help="output directory (default: $BHTOMO_OUTPUT_DIR or ./bhtomo-output)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="parallel workers (default: available cores)")
    p.add_argument("--report", action="store_true", help="also render PNG figures next to the CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bhtomo", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in TASKS:
        _add_common(sub.add_parser(name, help=f"run the {name} task"))
    sw = sub.add_parser("sweep", help="run a task over a parameter grid")
    sw.add_argument("task", choices=sorted(TASKS))
    sw.add_argument("--grid", action="append", default=[], metavar="KEY=GRID",
                    help="grid axis, e.g. u=0:5:11 or phi=1pi,2pi (repeatable)")
    _add_common(sw)
    rp = sub.add_parser("report", help="render figures for an existing output directory")
    rp.add_argument("directory")
    return parser


def _split_kv(items, what) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"{what} must look like KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def config_from_args(args, task: str) -> tuple[RunConfig, dict]:
    data = load_config_file(args.config) if args.config else {}
    if data.get("task") not in (None, task):
        raise ConfigError(f"config file is for task {data['task']!r}, not {task!r}")
    cfg, grid = config_from_mapping(data, task)
    over = {k: getattr(args, k) for k in MODEL_KEYS if getattr(args, k) is not None}
    if args.out is not None:
        over["output"] = Path(args.out)
    if args.seed is not None:
        over["seed"] = args.seed
    over["workers"] = args.workers if args.workers is not None else (
        cfg.workers if "workers" in data else (os.cpu_count() or 1))
    if args.report:
        over["report"] = True
    params = dict(cfg.params)
    params.update(_split_kv(args.sets, "--set"))
    cfg = replace(cfg, params=params, **over)
    grid.update(_split_kv(getattr(args, "grid", []) or [], "--grid"))
    return cfg, grid


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            from .plotting import render_report
            for path in render_report(args.directory):
                print(path)
            return EXIT_OK
        if args.command == "sweep":
            cfg, grid = config_from_args(args, args.task)
            outdir, failures = sweep(cfg, grid)
            if failures:
                print(f"{failures} sweep point(s) failed; see {outdir / 'sweep_points.csv'}", file=sys.stderr)
            print(outdir)
            return EXIT_OK
        cfg, _ = config_from_args(args, args.command)
        print(run(cfg))
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DimensionError, MemoryError) as exc:
        print(f"resource cap exceeded: {exc}\n"
              "hint: pick a symmetry sector, lower N, or raise the 'cap' parameter if memory allows",
              file=sys.stderr)
        return EXIT_RESOURCE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
