"""Stationary points of the DNLSE, continued in ``u`` from the bare orbitals.

A stationary point (SP) solves ``(D + g P) psi = mu psi`` with ``P = diag(|psi|^2)``,
``g = N U`` and ``|psi| = 1``. Ring orbitals stay exact SPs at any interaction; chain
SPs deform and are followed by a bordered Newton iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Model, orbital_position

RESIDUAL_TOL = 1e-10
NODE_TOL = 1e-9


class ContinuationError(RuntimeError):
    """Newton continuation lost the branch.

    ``last_u`` is the largest interaction at which a converged SP was found.
    """

    def __init__(self, message: str, last_u: float):
        super().__init__(message)
        self.last_u = last_u


@dataclass(frozen=True)
class StationaryPoint:
    psi: np.ndarray
    mu: float
    m_o: int
    u: float
    residual: float = field(default=0.0, compare=False)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.psi) or bool(np.all(np.abs(self.psi.imag) < 1e-14))


@dataclass(frozen=True)
class MuDecomposition:
    eps_floor: float
    delta: float
    e_kin: float

    @property
    def mu(self) -> float:
        return self.eps_floor + self.delta + self.e_kin


def sp_residual(model: Model, psi: np.ndarray, mu: float) -> float:
    D = model.hopping_matrix
    r = D @ psi + model.g * np.abs(psi) ** 2 * psi - mu * psi
    return float(np.linalg.norm(r))


def count_nodes(psi: np.ndarray, tol: float = NODE_TOL) -> int:
    """Sign changes of a real profile, skipping (near-)zero entries."""
    x = np.real(psi)
    x = x[np.abs(x) > tol * np.max(np.abs(x))]
    return int(np.count_nonzero(np.diff(np.sign(x)) != 0))


def _fix_gauge(psi: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(psi) > 1e-12)
    if nz.size == 0:
        return psi
    first = psi[nz[0]]
    if np.iscomplexobj(psi):
        return psi * (abs(first) / first)
    return psi if first > 0 else -psi


def zero_u_sp(model: Model, m_o: int) -> StationaryPoint:
    """The ``u = 0`` SP: orbital ``m_o`` itself with ``mu = eps_{k_o}``."""
    i = orbital_position(model, m_o)
    psi = _fix_gauge(model.orbital_matrix[:, i].copy())
    if model.is_ring and model.Phi == 0 and m_o % model.L_s == 0:
        psi = psi.real.copy()
    return StationaryPoint(psi, float(model.orbital_energies[i]), m_o, 0.0)


def _newton(D, g, psi, mu, tol, parity=0, max_iter=50):
    n = len(psi)
    if parity:
        psi = 0.5 * (psi + parity * psi[::-1])
    J = np.zeros((n + 1, n + 1))
    for _ in range(max_iter):
        dens = psi * psi
        F = np.empty(n + 1)
        F[:n] = D @ psi + g * dens * psi - mu * psi
        F[n] = 0.5 * (psi @ psi - 1.0)
        if np.linalg.norm(F) < tol:
            return psi, mu, float(np.linalg.norm(F[:n]))
        J[:n, :n] = D
        J[np.arange(n), np.arange(n)] += 3 * g * dens - mu
        J[:n, n] = -psi
        J[n, :n] = psi
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        psi = psi + step[:n]
        if parity:
            psi = 0.5 * (psi + parity * psi[::-1])
        mu = mu + step[n]
        if not np.all(np.isfinite(psi)):
            return None
    return None


def continue_sp(
    model: Model,
    m_o: int,
    u_target: float | None = None,
    steps: int | None = None,
    *,
    start: StationaryPoint | None = None,
    tol: float = 1e-12,
    symmetric: bool = True,
) -> StationaryPoint:
    """Follow the ``m_o`` SP from ``u = 0`` (or from ``start``) to ``u_target``.

    ``u_target`` defaults to the model's own ``u``. Each accepted step is checked
    for the residual and for node conservation; on Newton failure the step is
    halved up to 10 times before giving up. With ``symmetric`` (default) chain
    solutions are kept in the mirror-parity sector of the starting orbital.
    """
    if u_target is None:
        u_target = model.u
    if u_target < 0:
        raise ValueError("u_target must be non-negative")
    sp0 = start if start is not None else zero_u_sp(model, m_o)
    K = model.K

    if model.is_ring:
        # uniform density: the orbital stays an eigenvector, only mu shifts
        mu = sp0.mu + (u_target - sp0.u) * K / model.L
        res = sp_residual(model.with_u(u_target), sp0.psi, mu)
        return StationaryPoint(sp0.psi, float(mu), m_o, float(u_target), res)

    D = np.real(model.hopping_matrix)
    psi = np.real(sp0.psi).astype(float)
    mu = float(sp0.mu)
    nodes = count_nodes(psi)
    # the mirror parity of the orbital is conserved along the branch; projecting
    # onto it keeps rounding noise from seeding symmetry-broken solutions
    parity = (-1) ** (m_o + 1) if symmetric else 0
    u = float(sp0.u)
    span = u_target - u
    if span == 0:
        out = _newton(D, u * K, psi, mu, tol, parity)
        if out is None:
            raise ContinuationError(f"Newton failed at u={u}", u)
        psi, mu, res = out
        return StationaryPoint(_fix_gauge(psi), float(mu), m_o, u, res)
    if steps is None:
        steps = max(50, math.ceil(abs(span) * 20))
    du = span / steps
    prev = None
    while (u_target - u) * np.sign(span) > 1e-15:
        h = du if abs(du) <= abs(u_target - u) else u_target - u
        for _ in range(11):
            u_new = u + h
            if prev is not None:
                # secant predictor along the branch
                p_psi, p_mu, p_u = prev
                w = h / (u - p_u)
                guess_psi = psi + w * (psi - p_psi)
                guess_mu = mu + w * (mu - p_mu)
            else:
                guess_psi, guess_mu = psi, mu
            out = _newton(D, u_new * K, guess_psi, guess_mu, tol, parity)
            if out is not None and count_nodes(out[0]) == nodes and out[2] < RESIDUAL_TOL:
                break
            if out is not None and count_nodes(out[0]) != nodes and abs(h) < abs(du) / 2**9:
                raise ContinuationError(
                    f"node count changed near u={u_new:.6g}: continuation jumped branch", u
                )
            h /= 2
        else:
            raise ContinuationError(f"Newton failed beyond u={u:.6g} (possible bifurcation)", u)
        prev = (psi, mu, u)
        psi, mu, res = out
        u = u_new
    psi = _fix_gauge(psi)
    return StationaryPoint(psi, float(mu), m_o, float(u_target), sp_residual(model.with_u(u_target), psi, mu))


def continuation_path(model: Model, m_o: int, u_values) -> list[StationaryPoint]:
    """SPs along an increasing grid of ``u``, each continued from the previous one."""
    out = []
    sp = zero_u_sp(model, m_o)
    for u in u_values:
        if u < sp.u:
            sp = zero_u_sp(model, m_o)
        sp = continue_sp(model, m_o, float(u), start=sp,
                         steps=max(10, math.ceil((u - sp.u) * 20)))
        out.append(sp)
    return out


def mu_decomposition(sp: StationaryPoint, model: Model) -> MuDecomposition:
    delta = sp.u * model.K / model.L
    return MuDecomposition(-model.K, delta, sp.mu + model.K - delta)


def sp_orbital_occupations(sp: StationaryPoint, model: Model) -> tuple[np.ndarray, float]:
    """Fractions ``n_k / N = |<k|psi>|^2`` and ``n_SP / N`` (the ``k_o`` entry)."""
    frac = np.abs(model.orbital_matrix.conj().T @ sp.psi) ** 2
    return frac, float(frac[orbital_position(model, sp.m_o)])


def classical_energy(model: Model, psi: np.ndarray) -> float:
    """Classical Hamiltonian at ``a = sqrt(N) psi`` (normal-ordered interaction)."""
    N = model.N
    kin = np.real(np.vdot(psi, model.hopping_matrix @ psi))
    return float(N * kin + 0.5 * model.U * N**2 * np.sum(np.abs(psi) ** 4))


def coherent_energy(model: Model, psi: np.ndarray) -> float:
    """Exact ``<H>`` in the fixed-``N`` coherent state built on ``psi``."""
    N = model.N
    kin = np.real(np.vdot(psi, model.hopping_matrix @ psi))
    return float(N * kin + 0.5 * model.U * N * (N - 1) * np.sum(np.abs(psi) ** 4))


def sp_energy(sp: StationaryPoint, model: Model, *, reduced: bool = False) -> float:
    """Energy of the SP.

    By default this is the classical Hamiltonian at ``sqrt(N) psi``. With
    ``reduced=True`` the constant ``U N^2 / L`` is dropped, which is the
    convention in which an undisplaced condensate has ``eps N - (U/4L) N^2``
    (chain) or ``eps N - (U/2L) N^2`` (ring).
    """
    m = model.with_u(sp.u) if not np.isclose(model.u, sp.u) else model
    e = classical_energy(m, sp.psi)
    if reduced:
        e -= m.U * m.N**2 / m.L
    return e
