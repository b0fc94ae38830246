"""Classical (DNLSE) dynamics: integration, time averages, Lyapunov exponents and sampling.

The state is the unit-norm site vector ``psi`` with ``a = sqrt(N) psi``; it obeys

    i dpsi/dt = (D + g diag|psi|^2) psi,   g = N U.

The default integrator is a 6th-order Yoshida composition of Strang steps. The
kinetic flow is applied exactly with a precomputed propagator and the on-site
nonlinear flow is an exact phase rotation, so the norm is conserved to rounding.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .lattice import Model, orbital_position
from .stationary import StationaryPoint, continue_sp, sp_orbital_occupations

DEFAULT_T = 2500.0
DEFAULT_RK_DT = 1e-3
DRIFT_TOL = 1e-8
BURN_FRACTION = 0.1

# Yoshida (1990) 6th-order "solution A" weights
_YOSHIDA6 = (
    0.78451361047755726382,
    0.23557321335935813368,
    -1.17767998417887100695,
)


def _yoshida_weights() -> np.ndarray:
    w1, w2, w3 = _YOSHIDA6
    w0 = 1.0 - 2.0 * (w1 + w2 + w3)
    return np.array([w3, w2, w1, w0, w1, w2, w3])


class DriftError(RuntimeError):
    """Norm or energy drift above tolerance; carries the monitor values."""

    def __init__(self, message: str, norm_drift: float, energy_drift: float):
        super().__init__(message)
        self.norm_drift = norm_drift
        self.energy_drift = energy_drift


class ShellSamplingError(RuntimeError):
    pass


@dataclass
class Trajectory:
    times: np.ndarray
    psi_t: np.ndarray
    n_k_t: np.ndarray
    norm_drift: float
    energy_drift: float
    energy: float
    N: int

    @property
    def T(self) -> float:
        return float(self.times[-1])


@dataclass(frozen=True)
class PhaseSpaceSample:
    psi0: np.ndarray
    E: float
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LyapunovResult:
    gamma: float
    plateau_std: float
    flagged: bool
    times: np.ndarray
    running: np.ndarray


# ---------------------------------------------------------------------------
# right-hand side and energy


def dnlse_rhs(model: Model, psi: np.ndarray) -> np.ndarray:
    """``dpsi/dt = -i (D + g |psi|^2) psi``."""
    return -1j * (model.hopping_matrix @ psi + model.g * np.abs(psi) ** 2 * psi)


def energy_per_particle(model: Model, psi: np.ndarray) -> np.ndarray | float:
    """Classical ``H / N`` at ``a = sqrt(N) psi``; ``psi`` may be ``(..., L_s)``."""
    D = model.hopping_matrix
    kin = np.real(np.einsum("...i,ij,...j->...", psi.conj(), D, psi))
    pot = 0.5 * model.g * np.sum(np.abs(psi) ** 4, axis=-1)
    out = kin + pot
    return float(out) if np.ndim(out) == 0 else out


def default_dt(model: Model) -> float:
    """Step for the 6th-order splitting: ``min(0.005 / K, 0.015 / g)``.

    The splitting error is set by the fastest of the hopping and on-site
    phase rates; this keeps the energy drift below 1e-8 over ``T = 2500``.
    """
    rates = [model.K / 0.005]
    if model.g > 0:
        rates.append(model.g / 0.015)
    return 1.0 / max(rates)


def _drift_scale(model: Model, E: float) -> float:
    return max(abs(E), model.K)


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _nonlinear(psi, c):
    for j in range(psi.shape[0]):
        a = psi[j]
        phase = c * (a.real * a.real + a.imag * a.imag)
        psi[j] = a * complex(math.cos(phase), -math.sin(phase))


@numba.njit(cache=True)
def _matvec(M, x, out):
    n = x.shape[0]
    for i in range(n):
        s = 0j
        for j in range(n):
            s += M[i, j] * x[j]
        out[i] = s


@numba.njit(cache=True)
def _split_run(psi, kin, kidx, acoef, g_dt, nsteps, stride, rec):
    buf = np.empty_like(psi)
    nst = kidx.shape[0]
    norm0 = 0.0
    for j in range(psi.shape[0]):
        norm0 += psi[j].real * psi[j].real + psi[j].imag * psi[j].imag
    r = 1
    for s in range(nsteps):
        for st in range(nst):
            _nonlinear(psi, acoef[st] * g_dt)
            _matvec(kin[kidx[st]], psi, buf)
            psi[:] = buf
        _nonlinear(psi, acoef[nst] * g_dt)
        # both sub-flows conserve the norm exactly; remove the rounding bias
        nrm = 0.0
        for j in range(psi.shape[0]):
            nrm += psi[j].real * psi[j].real + psi[j].imag * psi[j].imag
        psi *= math.sqrt(norm0 / nrm)
        if (s + 1) % stride == 0:
            rec[r] = psi
            r += 1
    return psi


@numba.njit(cache=True)
def _rhs(D, g, psi, out):
    n = psi.shape[0]
    for i in range(n):
        s = 0j
        for j in range(n):
            s += D[i, j] * psi[j]
        a = psi[i]
        s += g * (a.real * a.real + a.imag * a.imag) * a
        out[i] = -1j * s


@numba.njit(cache=True)
def _rk4_run(psi, D, g, dt, nsteps, stride, rec):
    k1 = np.empty_like(psi)
    k2 = np.empty_like(psi)
    k3 = np.empty_like(psi)
    k4 = np.empty_like(psi)
    tmp = np.empty_like(psi)
    r = 1
    for s in range(nsteps):
        _rhs(D, g, psi, k1)
        tmp[:] = psi + 0.5 * dt * k1
        _rhs(D, g, tmp, k2)
        tmp[:] = psi + 0.5 * dt * k2
        _rhs(D, g, tmp, k3)
        tmp[:] = psi + dt * k3
        _rhs(D, g, tmp, k4)
        psi[:] = psi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (s + 1) % stride == 0:
            rec[r] = psi
            r += 1
    return psi


class Propagator:
    """Precomputed exact kinetic propagators for one model and time step."""

    def __init__(self, model: Model, dt: float, method: str = "yoshida6"):
        self.model = model
        self.dt = float(dt)
        self.method = method
        D = np.asarray(model.hopping_matrix, dtype=complex)
        self.D = np.ascontiguousarray(D)
        self.g = float(model.g)
        if method == "yoshida6":
            w = _yoshida_weights()
        elif method == "strang":
            w = np.array([1.0])
        elif method == "rk4":
            return
        else:
            raise ValueError(f"unknown integrator {method!r}")
        evals, V = np.linalg.eigh(D)
        distinct = sorted(set(np.round(w, 15)))
        self.kin = np.ascontiguousarray(np.array([
            V @ np.diag(np.exp(-1j * evals * wi * self.dt)) @ V.conj().T for wi in distinct
        ]))
        self.kidx = np.array([distinct.index(np.round(wi, 15)) for wi in w], dtype=np.int64)
        a = np.empty(len(w) + 1)
        a[0] = w[0] / 2
        a[1:-1] = (w[:-1] + w[1:]) / 2
        a[-1] = w[-1] / 2
        self.acoef = a

    def run(self, psi: np.ndarray, nsteps: int, stride: int) -> np.ndarray:
        """Advance ``psi`` in place; returns the records (initial state included)."""
        rec = np.empty((nsteps // stride + 1, len(psi)), dtype=complex)
        rec[0] = psi
        if self.method == "rk4":
            _rk4_run(psi, self.D, self.g, self.dt, nsteps, stride, rec)
        else:
            _split_run(psi, self.kin, self.kidx, self.acoef, self.g * self.dt, nsteps, stride, rec)
        return rec


# ---------------------------------------------------------------------------
# trajectories


def integrate(
    model: Model,
    psi0: np.ndarray,
    T: float = DEFAULT_T,
    dt: float | None = None,
    *,
    record_dt: float = 0.1,
    method: str = "yoshida6",
    check: bool = True,
    tol: float = DRIFT_TOL,
) -> Trajectory:
    """Integrate the DNLSE from ``psi0`` for time ``T``.

    States are recorded every ``record_dt`` (rounded to a whole number of steps) and
    the step is reduced if needed so the run ends exactly at ``T``.
    With ``check`` a norm or relative energy drift above ``tol`` raises
    :class:`DriftError`. A negative ``dt`` runs backward in time.
    """
    if dt is None:
        dt = DEFAULT_RK_DT if method == "rk4" else default_dt(model)
    psi = np.array(psi0, dtype=complex)
    # shrink dt slightly so that T is a whole number of recording strides
    nsteps = max(1, int(np.ceil(T / abs(dt) - 1e-9)))
    stride = max(1, int(round(record_dt / abs(dt))))
    stride = min(stride, nsteps)
    nsteps = int(np.ceil(nsteps / stride)) * stride
    dt = float(np.sign(dt)) * T / nsteps
    prop = Propagator(model, dt, method)
    rec = prop.run(psi, nsteps, stride)
    times = np.arange(rec.shape[0]) * stride * dt
    E = energy_per_particle(model, rec)
    norms = np.sum(np.abs(rec) ** 2, axis=1)
    norm_drift = float(np.max(np.abs(norms - norms[0])))
    energy_drift = float(np.max(np.abs(E - E[0])) / _drift_scale(model, E[0]))
    if check and (norm_drift > tol or energy_drift > tol):
        raise DriftError(
            f"integration drift above {tol:g}: norm {norm_drift:.3e}, energy {energy_drift:.3e} "
            f"(dt={dt}, method={method})",
            norm_drift,
            energy_drift,
        )
    F = model.orbital_matrix
    n_k = model.N * np.abs(rec @ F.conj()) ** 2
    return Trajectory(times, rec, n_k, norm_drift, energy_drift, float(E[0]), model.N)


def _burn_mask(traj: Trajectory, t_burn: float | None) -> np.ndarray:
    if t_burn is None:
        t_burn = BURN_FRACTION * traj.T
    mask = np.abs(traj.times) >= t_burn
    if not mask.any():
        raise ValueError("burn-in removes the whole trajectory")
    return mask


def time_average_occupations(traj: Trajectory, t_burn: float | None = None) -> np.ndarray:
    """Mean orbital occupations ``<n_k>`` after the burn-in (default ``0.1 T``)."""
    return traj.n_k_t[_burn_mask(traj, t_burn)].mean(axis=0)


def classical_one_body(traj: Trajectory, t_burn: float | None = None) -> np.ndarray:
    """Time-averaged ``rho_ij = <conj(psi_i) psi_j>`` in the site basis."""
    P = traj.psi_t[_burn_mask(traj, t_burn)]
    rho = np.einsum("ti,tj->ij", P.conj(), P) / len(P)
    return rho / np.trace(rho).real


def classical_purity(traj: Trajectory, t_burn: float | None = None) -> float:
    rho = classical_one_body(traj, t_burn)
    return float(np.sum(np.abs(rho) ** 2))


# ---------------------------------------------------------------------------
# Lyapunov exponent


def lyapunov_exponent(
    model: Model,
    psi0: np.ndarray,
    T: float = 1000.0,
    renorm_interval: float = 1.0,
    *,
    d0: float = 1e-8,
    dt: float | None = None,
    seed: int = 0,
    plateau_rtol: float = 0.1,
) -> LyapunovResult:
    """Largest Lyapunov exponent by the two-trajectory (Benettin) method.

    The partner starts at distance ``d0`` along a random norm-preserving
    direction and is pulled back to ``d0`` every ``renorm_interval``. The
    estimate is flagged when the running mean over the last 20% of the run
    fluctuates by more than ``plateau_rtol`` relative (or ``2 / T`` absolute).
    """
    rng = np.random.default_rng(seed)
    if dt is None:
        dt = default_dt(model)
    psi = np.array(psi0, dtype=complex)
    psi /= np.linalg.norm(psi)
    delta = rng.normal(size=len(psi)) + 1j * rng.normal(size=len(psi))
    # tangent to the unit sphere, and orthogonal to the trivial phase direction
    delta -= np.vdot(psi, delta) * psi
    delta *= d0 / np.linalg.norm(delta)
    other = psi + delta
    other /= np.linalg.norm(other)

    prop = Propagator(model, dt)
    steps = max(1, int(round(renorm_interval / dt)))
    n_int = max(1, int(round(T / (steps * dt))))
    logs = np.empty(n_int)
    for i in range(n_int):
        prop.run(psi, steps, steps)
        prop.run(other, steps, steps)
        diff = other - psi
        d = np.linalg.norm(diff)
        logs[i] = math.log(d / d0)
        other = psi + diff * (d0 / d)
        other /= np.linalg.norm(other)
    t = np.arange(1, n_int + 1) * steps * dt
    running = np.cumsum(logs) / t
    tail = running[int(0.8 * n_int):]
    gamma = float(running[-1])
    spread = float(np.std(tail)) if tail.size > 1 else 0.0
    flagged = spread > max(plateau_rtol * abs(gamma), 2.0 / t[-1])
    return LyapunovResult(gamma, spread, bool(flagged), t, running)


def sp_and_sea_lyapunov(
    model: Model,
    m_o: int,
    T: float = 2000.0,
    *,
    count: int = 3,
    window: float = 0.01,
    kick: float = 1e-3,
    seed: int = 0,
    sp: StationaryPoint | None = None,
) -> tuple[LyapunovResult, list[LyapunovResult]]:
    """``gamma_SP`` from a launch next to the SP and ``gamma_CS`` samples.

    The chaotic-sea launches are drawn on the energy shell of the SP with
    half-width ``window`` (per particle).
    """
    if sp is None:
        sp = continue_sp(model, m_o)
    ss = np.random.SeedSequence(seed)
    a, b, c = ss.spawn(3)
    rng = np.random.default_rng(a)
    psi0 = sp.psi + kick * (rng.normal(size=model.L_s) + 1j * rng.normal(size=model.L_s))
    g_sp = lyapunov_exponent(model, psi0, T, seed=int(b.generate_state(1)[0]))
    E = float(energy_per_particle(model, sp.psi))
    shell = sample_energy_shell(model, E, window, count, rng_seed=int(c.generate_state(1)[0]))
    g_cs = [lyapunov_exponent(model, s.psi0, T, seed=i) for i, s in enumerate(shell)]
    return g_sp, g_cs


# ---------------------------------------------------------------------------
# phase-space sampling


def random_states(rng: np.random.Generator, count: int, L_s: int) -> np.ndarray:
    """Uniform points on the unit sphere: simplex-uniform weights, uniform phases."""
    p = rng.dirichlet(np.ones(L_s), size=count)
    theta = rng.uniform(0, 2 * np.pi, size=(count, L_s))
    return np.sqrt(p) * np.exp(1j * theta)


def sample_energy_shell(
    model: Model,
    E: float,
    window: float,
    count: int,
    rng_seed: int = 0,
    *,
    batch: int = 20000,
    min_rate: float = 1e-4,
    max_draws: int = 20_000_000,
) -> list[PhaseSpaceSample]:
    """Rejection-sample states with ``|H/N - E| < window``.

    ``E`` and ``window`` are energies per particle. Raises
    :class:`ShellSamplingError` if the acceptance rate falls below ``min_rate``.
    """
    if not window > 0:
        raise ValueError("window must be positive")
    rng = np.random.default_rng(rng_seed)
    out: list[PhaseSpaceSample] = []
    draws = 0
    prov = {"E": E, "window": window, "seed": rng_seed, "sampler": "simplex-uniform"}
    while len(out) < count:
        psi = random_states(rng, batch, model.L_s)
        e = energy_per_particle(model, psi)
        draws += batch
        for i in np.flatnonzero(np.abs(e - E) < window):
            if len(out) < count:
                out.append(PhaseSpaceSample(psi[i], float(e[i]), prov))
        rate = len(out) / draws
        if (draws >= 5 * batch and rate < min_rate) or draws >= max_draws:
            raise ShellSamplingError(
                f"acceptance rate {rate:.2e} after {draws} draws at E={E:.4g}; widen the window"
            )
    return out


def sample_phase_space(model: Model, count: int, rng_seed: int = 0) -> list[PhaseSpaceSample]:
    """Uniform phase-space samples over the whole energy range."""
    rng = np.random.default_rng(rng_seed)
    psi = random_states(rng, count, model.L_s)
    e = energy_per_particle(model, psi)
    prov = {"seed": rng_seed, "sampler": "simplex-uniform"}
    return [PhaseSpaceSample(p, float(x), prov) for p, x in zip(psi, e)]


# ---------------------------------------------------------------------------
# launches, ergodicity map and classical tomography


def launch_state(
    model: Model,
    m_o: int,
    fraction: float,
    rng: np.random.Generator,
    sp: StationaryPoint | None = None,
) -> np.ndarray:
    """Initial state with weight ``fraction`` in orbital ``m_o``.

    The remaining weight follows the SP's own occupation profile outside
    ``k_o`` (uniform if the SP sits entirely in ``k_o``), with random phases.
    """
    if sp is None:
        sp = continue_sp(model, m_o)
    frac, _ = sp_orbital_occupations(sp, model)
    io = orbital_position(model, m_o)
    rest = frac.copy()
    rest[io] = 0
    if rest.sum() < 1e-12:
        rest = np.ones_like(rest)
        rest[io] = 0
    rest /= rest.sum()
    amp = np.sqrt(np.clip(1 - fraction, 0, 1) * rest)
    amp[io] = math.sqrt(np.clip(fraction, 0, 1))
    phases = rng.uniform(0, 2 * np.pi, size=len(amp))
    phases[io] = 0.0
    c = amp * np.exp(1j * phases)
    return model.orbital_matrix @ c


def ergodicity_map(
    model: Model,
    m_o: int,
    n_o_grid,
    T: float = DEFAULT_T,
    *,
    seeds: int = 8,
    master_seed: int = 0,
    dt: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Long-time ``<n_o>/N`` against the launch fraction ``n_o(0)/N``.

    Each grid point is averaged over ``seeds`` random-phase launches.
    """
    grid = np.asarray(n_o_grid, dtype=float)
    sp = continue_sp(model, m_o)
    io = orbital_position(model, m_o)
    ss = np.random.SeedSequence(master_seed)
    children = ss.spawn(len(grid))
    out = np.empty(len(grid))
    for i, (x, child) in enumerate(zip(grid, children)):
        vals = []
        for r in child.spawn(seeds):
            psi0 = launch_state(model, m_o, x, np.random.default_rng(r), sp)
            traj = integrate(model, psi0, T, dt, record_dt=1.0, check=False)
            vals.append(time_average_occupations(traj)[io] / model.N)
        out[i] = float(np.mean(vals))
    return grid, out


def _tomo_task(args):
    model, psi0, io, T, dt = args
    traj = integrate(model, psi0, T, dt, record_dt=1.0, check=False)
    n = time_average_occupations(traj)[io]
    return traj.energy, float(n), classical_purity(traj), traj.norm_drift, traj.energy_drift


def classical_tomography(
    model: Model,
    samples: list[PhaseSpaceSample],
    m_o: int,
    T: float = DEFAULT_T,
    *,
    dt: float | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Evolve every sample; rows are ``(E, <n_o>, S, norm_drift, energy_drift)``.

    ``E`` is the total classical energy ``N * H/N``.
    """
    io = orbital_position(model, m_o)
    tasks = [(model, s.psi0, io, T, dt) for s in samples]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_tomo_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = [_tomo_task(t) for t in tasks]
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    arr[:, 0] *= model.N
    return arr
