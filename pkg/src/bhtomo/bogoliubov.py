"""Bogoliubov stability analysis around stationary points.

The small-oscillation matrix is written in the form

    W = [[A, -g Psi^2], [g conj(Psi)^2, -conj(A)]],   A = D + 2 g P - mu

which for a real SP reduces to ``[[A, -gP], [gP, -A]]``. Eigenvalues come in
``+-omega`` pairs; the physical member of each pair is picked by the sign of the
symplectic (Krein) norm ``|x|^2 - |y|^2`` of its eigenvector.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .lattice import Model, build_model, orbital_position
from .stationary import (
    ContinuationError,
    StationaryPoint,
    continue_sp,
    sp_residual,
    zero_u_sp,
)

COMPLEX_TOL = 1e-8
ZERO_TOL = 1e-8
CLUSTER_TOL = 1e-7
SP_RESIDUAL_LIMIT = 1e-8


class Stability(str, enum.Enum):
    ES = "ES"
    DS = "DS"
    UNSTABLE = "Unstable"


class PairingError(ArithmeticError):
    """Eigenvalues of W failed to pair up as ``+-omega``."""


@dataclass(frozen=True)
class BogoSpectrum:
    """Physical Bogoliubov frequencies of one SP.

    ``omega`` holds the ``L_s - 1`` non-zero physical frequencies sorted by real
    part (for a complex quartet the two members with positive imaginary part).
    ``modes[:, i]`` is the eigenvector of ``W`` for ``omega[i]``; for real modes it
    is scaled to unit symplectic norm.
    """

    omega: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray
    zero_modes: int
    classification: Stability
    gamma_o: float
    krein: np.ndarray = field(repr=False, default=None)

    @property
    def is_complex(self) -> np.ndarray:
        return np.abs(self.omega.imag) > COMPLEX_TOL * np.maximum(1.0, np.abs(self.omega))


def build_W(model: Model, sp: StationaryPoint, *, check: bool = True) -> np.ndarray:
    """Bogoliubov matrix around ``sp`` (``2 L_s x 2 L_s``)."""
    m = model.with_u(sp.u) if not math.isclose(model.u, sp.u, abs_tol=1e-14) else model
    if check:
        res = sp_residual(m, sp.psi, sp.mu)
        if res > SP_RESIDUAL_LIMIT:
            raise ValueError(f"SP is not converged (residual {res:.2e})")
    g = m.g
    psi = sp.psi
    n = len(psi)
    A = m.hopping_matrix + np.diag(2 * g * np.abs(psi) ** 2) - sp.mu * np.eye(n)
    if np.isrealobj(A) and sp.is_real:
        psi = np.real(psi)
        B = np.diag(g * psi**2)
        return np.block([[A, -B], [B, -A]])
    A = A.astype(complex)
    B = np.diag(g * psi.astype(complex) ** 2)
    return np.block([[A, -B], [B.conj(), -A.conj()]])


def _zero_mode_projector(psi: np.ndarray) -> np.ndarray:
    psi = psi / np.linalg.norm(psi)
    n = len(psi)
    Q = np.eye(n) - np.outer(psi, psi.conj())
    Qc = np.eye(n) - np.outer(psi.conj(), psi)
    out = np.zeros((2 * n, 2 * n), dtype=np.result_type(Q, complex) if np.iscomplexobj(psi) else float)
    out[:n, :n] = Q
    out[n:, n:] = Qc
    return out


def frequencies(
    W: np.ndarray,
    psi: np.ndarray | None = None,
    symmetry: np.ndarray | None = None,
) -> BogoSpectrum:
    """Diagonalize ``W`` and assign physical frequencies.

    When the SP wavefunction ``psi`` is given, the Goldstone direction is
    projected out first: the nonzero spectrum is unchanged while the defective
    zero eigenvalue becomes an exact double zero. An optional unitary
    ``symmetry`` commuting with ``W`` is used to pick eigenvectors of it inside
    degenerate clusters (ring momenta).
    """
    n = W.shape[0] // 2
    Wp = W
    if psi is not None:
        Q = _zero_mode_projector(np.asarray(psi))
        Wp = Q @ W @ Q
    evals, evecs = np.linalg.eig(Wp)
    raw = np.linalg.eigvals(W) if psi is not None else evals
    scale = np.maximum(1.0, np.abs(evals))
    is_cplx = np.abs(evals.imag) > COMPLEX_TOL * scale
    is_zero = (~is_cplx) & (np.abs(evals) < ZERO_TOL * scale)

    omegas: list[complex] = []
    vecs: list[np.ndarray] = []
    signs: list[float] = []

    # complex eigenvalues: one physical mode per conjugate pair, take Im > 0
    for i in np.flatnonzero(is_cplx & (evals.imag > 0)):
        omegas.append(complex(evals[i]))
        vecs.append(evecs[:, i] / np.linalg.norm(evecs[:, i]))
        signs.append(0.0)

    # real eigenvalues: cluster (near-)degenerate values and count Krein signs
    real_idx = np.flatnonzero(~is_cplx & ~is_zero)
    order = real_idx[np.argsort(evals[real_idx].real)]
    clusters: list[list[int]] = []
    for i in order:
        if clusters and abs(evals[i].real - evals[clusters[-1][-1]].real) < CLUSTER_TOL * max(1.0, abs(evals[i].real)):
            clusters[-1].append(i)
        else:
            clusters.append([i])
    for cl in clusters:
        V = evecs[:, cl]
        G = V[:n].conj().T @ V[:n] - V[n:].conj().T @ V[n:]
        G = 0.5 * (G + G.conj().T)
        w, S = np.linalg.eigh(G)
        pos = np.flatnonzero(w > 0)
        Vp = (V @ S[:, pos]) / np.sqrt(w[pos])
        if symmetry is not None and len(pos) > 1:
            # Vp is Krein-orthonormal; rotate it onto eigenvectors of the symmetry
            R = Vp[:n].conj().T @ (symmetry @ Vp)[:n] - Vp[n:].conj().T @ (symmetry @ Vp)[n:]
            _, Qr = np.linalg.eig(R)
            Qr, _ = np.linalg.qr(Qr)
            Vp = Vp @ Qr
        for j in range(Vp.shape[1]):
            omegas.append(complex(np.mean(evals[cl].real)))
            vecs.append(Vp[:, j])
            signs.append(1.0)

    zero_count = int(np.count_nonzero(is_zero))
    if len(omegas) + zero_count // 2 != n or zero_count % 2:
        raise PairingError(
            f"could not pair Bogoliubov eigenvalues: {len(omegas)} physical modes, "
            f"{zero_count} zero eigenvalues for {n} sites"
        )
    omega = np.array(omegas, dtype=complex)
    order = np.lexsort((omega.imag, omega.real))
    omega = omega[order]
    modes = np.array(vecs).T[:, order] if vecs else np.zeros((2 * n, 0), dtype=complex)
    krein = np.array(signs)[order]
    cls, gamma = _classify(omega)
    return BogoSpectrum(omega, raw, modes, zero_count // 2, cls, gamma, krein)


def _classify(omega: np.ndarray) -> tuple[Stability, float]:
    if omega.size == 0:
        return Stability.ES, 0.0
    cplx = np.abs(omega.imag) > COMPLEX_TOL * np.maximum(1.0, np.abs(omega))
    gamma = float(max(0.0, omega.imag.max())) if cplx.any() else 0.0
    if cplx.any():
        return Stability.UNSTABLE, gamma
    if np.all(omega.real > -ZERO_TOL):
        return Stability.ES, 0.0
    return Stability.DS, 0.0


def classify_stability(spec: BogoSpectrum) -> tuple[Stability, float]:
    return _classify(spec.omega)


def ring_symmetry(model: Model, sp: StationaryPoint) -> np.ndarray:
    """Lattice translation acting on ``(x, y)``; it commutes with ``W`` for a ring SP."""
    n = model.L_s
    T = np.roll(np.eye(n), 1, axis=0)
    k_o = 2 * np.pi * sp.m_o / model.L
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    out[:n, :n] = T
    out[n:, n:] = np.exp(-2j * k_o) * T
    return out


def bogoliubov_spectrum(model: Model, sp: StationaryPoint) -> BogoSpectrum:
    sym = ring_symmetry(model, sp) if model.is_ring else None
    return frequencies(build_W(model, sp), sp.psi, sym)


def sp_for(model: Model, m_o: int, u: float | None = None) -> StationaryPoint:
    """The continued ``m_o`` SP at interaction ``u`` (default: the model's)."""
    return continue_sp(model, m_o, model.u if u is None else u)


# ---------------------------------------------------------------------------
# closed forms


def ring_excitation_energies(model: Model, m_o: int, q: float) -> tuple[float, float]:
    """``(eps_par, eps_perp)`` for the pair of orbitals ``k_o +- q`` of a ring."""
    L = model.L
    k_o = 2 * np.pi * m_o / L
    a = model.Phi / L

    def eps(k):
        return -model.K * np.cos(k - a)

    par = 0.5 * (eps(k_o + q) + eps(k_o - q)) - eps(k_o)
    perp = 0.5 * (eps(k_o + q) - eps(k_o - q))
    return float(par), float(perp)


def ring_frequencies_closed_form(model: Model, m_o: int, q) -> np.ndarray:
    """Ring frequencies ``eps_perp + sqrt((eps_par + 2 Delta) eps_par)``.

    On the real branch the root carries the sign of ``eps_par`` (the positive
    Krein-norm member of the pair); on the complex branch the root is ``+i|.|``.
    ``q`` may be an array of momenta ``2 pi j / L``.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.empty(q.shape, dtype=complex)
    for i, qq in enumerate(q):
        par, perp = ring_excitation_energies(model, m_o, qq)
        rad = (par + 2 * model.delta) * par
        if rad >= 0:
            out[i] = perp + math.copysign(math.sqrt(rad), par)
        else:
            out[i] = perp + 1j * math.sqrt(-rad)
    return out


def ring_physical_frequencies(model: Model, m_o: int = 0) -> np.ndarray:
    """All ``L_s - 1`` closed-form ring frequencies, sorted like :func:`frequencies`."""
    q = 2 * np.pi * np.arange(1, model.L_s) / model.L
    w = ring_frequencies_closed_form(model, m_o, q)
    return w[np.lexsort((w.imag, w.real))]


def chain_zero_order_frequencies(model: Model, m_o: int, k) -> np.ndarray:
    """Zero-order chain estimate ``sqrt((eps_par + 2 Delta) eps_par)`` per orbital ``k``.

    ``eps_par = K (cos k_o - cos k)``; the real root carries the sign of
    ``eps_par`` so that ``u = 0`` reproduces ``eps_k - eps_{k_o}``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    k_o = np.pi * m_o / model.L
    par = model.K * (np.cos(k_o) - np.cos(k))
    rad = (par + 2 * model.delta) * par
    return np.where(
        rad >= 0,
        np.sign(par) * np.sqrt(np.abs(rad)) + 0j,
        1j * np.sqrt(np.abs(rad)),
    )


def zero_order_onset(model: Model, m_o: int) -> float:
    """Smallest ``u`` at which the zero-order chain estimate turns complex."""
    ms = np.arange(1, m_o)
    if ms.size == 0:
        return math.inf
    k = np.pi * ms / model.L
    par = model.K * (np.cos(np.pi * m_o / model.L) - np.cos(k))
    # radicand vanishes where 2 Delta = -eps_par, Delta = u K / L
    return float(np.min(-par * model.L / (2 * model.K)))


def five_site_cubic(u: float) -> tuple[float, float, float]:
    c0 = 1 / 16 + u**3 / 64
    c1 = 3 / 4 + u / 8 + u**3 / 32
    c2 = 9 / 4 + u / 4 + u**2 / 16
    return c0, c1, c2


def five_site_discriminant(u: float) -> float:
    c0, c1, c2 = five_site_cubic(u)
    d0 = c2**2 - 3 * c1
    d1 = 2 * c2**3 - 9 * c1 * c2 + 27 * c0
    return d1**2 - 4 * d0**3


def five_site_critical_u(lo: float = 0.5, hi: float = 3.0) -> float:
    """Root of the cubic discriminant: the onset of complex ``omega_{+-1}``."""
    return float(optimize.brentq(five_site_discriminant, lo, hi, xtol=1e-14))


def five_site_chain_closed_form(u: float) -> dict[str, complex]:
    """Frequencies of the ``m_o = 2`` SP of the 5-site chain (``K = 1``).

    Returns ``omega_-1, omega_1, omega_2, omega_3``: three come from the roots of
    the cubic via Cardano's formula, and ``omega_2^2 = 1 + u/2``.
    """
    c0, c1, c2 = five_site_cubic(u)
    d0 = c2**2 - 3 * c1
    d1 = 2 * c2**3 - 9 * c1 * c2 + 27 * c0
    C = ((d1 + np.sqrt(complex(d1**2 - 4 * d0**3))) / 2) ** (1 / 3)
    if abs(C) < 1e-300:
        C = ((d1 - np.sqrt(complex(d1**2 - 4 * d0**3))) / 2) ** (1 / 3)
    xi = np.exp(2j * np.pi / 3)
    lam = np.array([(c2 + xi**j * C + d0 / (xi**j * C)) / 3 for j in range(3)])
    cplx = np.abs(lam.imag) > 1e-9 * np.abs(lam)
    if cplx.any():
        pair = lam[cplx]
        top = lam[~cplx][0].real
        s = np.sqrt(pair[np.argmax(pair.imag)])
        s = s if s.imag > 0 else -s
        w_plus, w_minus = (s, -s.conjugate()) if s.real >= 0 else (-s.conjugate(), s)
        w3 = math.sqrt(top)
    else:
        lo, mid, top = np.sort(lam.real)
        # mirrored lower orbital keeps its negative (Krein) sign
        w_minus = -math.sqrt(lo)
        w_plus = math.sqrt(mid)
        w3 = math.sqrt(top)
    return {
        "omega_-1": complex(w_minus),
        "omega_1": complex(w_plus),
        "omega_2": complex(math.sqrt(1 + u / 2)),
        "omega_3": complex(w3),
    }


def dark_state_frequencies(u: float) -> dict[str, complex]:
    """Closed forms for the mid-band (dark) SP of the 5-site chain (``K = 1``)."""
    r9 = np.sqrt(complex(u * u - 9))
    r27 = np.sqrt(complex(u * u - 27))
    out = {
        "omega_+1": np.sqrt(0.25 + u * u / 18 + u / 18 * r9),
        "omega_-1": -np.sqrt(0.25 + u * u / 18 - u / 18 * r9),
        "omega_+2": np.sqrt(0.75 + u * u / 18 + u / 18 * r27),
        "omega_-2": -np.sqrt(0.75 + u * u / 18 - u / 18 * r27),
    }
    return {k: complex(v) for k, v in out.items()}


def as_physical(values) -> np.ndarray:
    """Map closed-form frequencies onto the ``Im >= 0`` physical convention."""
    w = np.array(list(values), dtype=complex)
    w = np.where(w.imag < 0, w.conj(), w)
    return w[np.lexsort((w.imag, w.real))]


# ---------------------------------------------------------------------------
# orbital-basis structure and block approximation


def build_P_tilde(model: Model, sp: StationaryPoint) -> np.ndarray:
    F = model.orbital_matrix
    return F.conj().T @ np.diag(sp.density) @ F


@dataclass(frozen=True)
class BlockApproximation:
    delta_o: float
    delta_k: np.ndarray
    delta_q: np.ndarray
    high: dict[int, complex]
    low: dict[tuple[int, int], np.ndarray]

    def frequencies(self) -> np.ndarray:
        vals = list(self.high.values())
        for w in self.low.values():
            vals.extend(w)
        return as_physical(vals)


def block_approximation(model: Model, sp: StationaryPoint) -> BlockApproximation:
    """Block-wise estimate of the chain frequencies from the orbital-basis ``P``.

    Orbitals ``m`` whose mirror partner ``2 m_o - m`` exists are diagonalized in
    4x4 blocks; the remaining (high) orbitals in 2x2 blocks.
    """
    if model.is_ring:
        raise ValueError("block approximation is defined for chains")
    m_o = sp.m_o
    g = sp.u * model.K
    Pt = np.real(build_P_tilde(model, sp))
    io = orbital_position(model, m_o)
    eps = model.orbital_energies
    delta_o = g * Pt[io, io]
    delta_k = g * np.diag(Pt)
    # diagonal of A in the orbital basis; the k_o entry is not used
    E = eps + 2 * delta_k - sp.mu
    L_s = model.L_s
    high: dict[int, complex] = {}
    low: dict[tuple[int, int], np.ndarray] = {}
    delta_q = np.zeros(L_s)
    eta = np.diag([1.0, 1.0, -1.0, -1.0])
    for m in range(1, L_s + 1):
        if m == m_o:
            continue
        partner = 2 * m_o - m
        i = m - 1
        if 1 <= partner <= L_s:
            if m > m_o:
                continue
            j = partner - 1
            dq = g * Pt[i, j]
            delta_q[i] = delta_q[j] = dq
            M = np.array([
                [E[i], 2 * dq, -delta_k[i], -dq],
                [2 * dq, E[j], -dq, -delta_k[j]],
                [delta_k[i], dq, -E[i], -2 * dq],
                [dq, delta_k[j], -2 * dq, -E[j]],
            ])
            w, V = np.linalg.eig(M)
            phys = []
            for a in range(4):
                if abs(w[a].imag) > COMPLEX_TOL * max(1, abs(w[a])):
                    if w[a].imag > 0:
                        phys.append(w[a])
                elif np.real(V[:, a].conj() @ eta @ V[:, a]) > 0:
                    phys.append(w[a])
            low[(m, partner)] = np.array(phys, dtype=complex)
        else:
            a, b = E[i], delta_k[i]
            rad = a * a - b * b
            high[m] = complex(math.copysign(math.sqrt(rad), a)) if rad >= 0 else complex(0, math.sqrt(-rad))
    return BlockApproximation(float(delta_o), delta_k, delta_q, high, low)


# ---------------------------------------------------------------------------
# stability diagrams and critical values


def ring_point(L_s: int, N: int, m_o: int, phi: float, u: float, K: float = 1.0) -> tuple[Model, StationaryPoint]:
    """Ring model and SP at unfolded phase ``phi = Phi - 2 pi m_o``."""
    Phi = phi + 2 * np.pi * m_o
    model = build_model("ring", L_s, N, K, Phi=Phi, u=u)
    return model, continue_sp(model, m_o)


def ring_classification(L_s: int, m_o: int, phi: float, u: float) -> BogoSpectrum:
    model, sp = ring_point(L_s, 1000, m_o, phi, u)
    return bogoliubov_spectrum(model, sp)


@dataclass(frozen=True)
class StabilityDiagram:
    phi: np.ndarray | None
    u: np.ndarray
    classes: np.ndarray
    gamma: np.ndarray
    boundaries: list[dict] = field(default_factory=list)


def _bisect(f, a: float, b: float, tol: float) -> float:
    fa = f(a)
    while abs(b - a) > tol:
        c = 0.5 * (a + b)
        if f(c) == fa:
            a = c
        else:
            b = c
    return 0.5 * (a + b)


def stability_diagram(
    model: Model,
    m_o: int,
    u_grid,
    phi_grid=None,
    *,
    tol: float = 1e-6,
) -> StabilityDiagram:
    """Classify the ``m_o`` SP over a grid.

    Rings use a ``(phi, u)`` grid in the unfolded phase; chains a ``u`` grid with
    continuation between points. Class changes between neighbouring cells are
    refined by bisection along the fastest axis to ``tol``.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    if model.is_ring:
        if phi_grid is None:
            raise ValueError("a ring stability diagram needs a phi grid")
        phi_grid = np.asarray(phi_grid, dtype=float)
        classes = np.empty((len(u_grid), len(phi_grid)), dtype=object)
        gamma = np.zeros(classes.shape)
        bounds = []
        for a, u in enumerate(u_grid):
            for b, phi in enumerate(phi_grid):
                spec = ring_classification(model.L_s, m_o, phi, u)
                classes[a, b] = spec.classification.value
                gamma[a, b] = spec.gamma_o
            for b in range(len(phi_grid) - 1):
                if classes[a, b] != classes[a, b + 1]:
                    def f(p, u=u):
                        return ring_classification(model.L_s, m_o, p, u).classification.value
                    x = _bisect(f, phi_grid[b], phi_grid[b + 1], tol)
                    bounds.append({"u": float(u), "phi": float(x), "from": classes[a, b], "to": classes[a, b + 1]})
        return StabilityDiagram(phi_grid, u_grid, classes, gamma, bounds)

    classes = np.empty(len(u_grid), dtype=object)
    gamma = np.zeros(len(u_grid))
    sps = []
    sp = zero_u_sp(model, m_o)
    for a, u in enumerate(u_grid):
        sp = continue_sp(model, m_o, float(u), start=sp if u >= sp.u else None)
        sps.append(sp)
        spec = bogoliubov_spectrum(model.with_u(u), sp)
        classes[a] = spec.classification.value
        gamma[a] = spec.gamma_o
    bounds = []
    for a in range(len(u_grid) - 1):
        if classes[a] != classes[a + 1]:
            start = sps[a]

            def f(uu, start=start):
                s = continue_sp(model, m_o, uu, start=start, steps=max(5, math.ceil(abs(uu - start.u) * 50)))
                return bogoliubov_spectrum(model.with_u(uu), s).classification.value

            x = _bisect(f, u_grid[a], u_grid[a + 1], tol)
            bounds.append({"u": float(x), "from": classes[a], "to": classes[a + 1]})
    return StabilityDiagram(None, u_grid, classes, gamma, bounds)


def es_boundary_equation(phi: float, u: float, L: int, q: float | None = None) -> float:
    """Residual of ``2 cos(phi/L) = -u/L + sqrt((u/L)^2 + 4 cos^2(q/2))``."""
    if q is None:
        q = 2 * np.pi / L
    return 2 * np.cos(phi / L) - (-(u / L) + np.sqrt((u / L) ** 2 + 4 * np.cos(q / 2) ** 2))


def phi_c_es(u: float, L: int) -> float:
    """Landau (ES -> DS) critical unfolded phase of the ``m_o = 0`` ring condensate."""
    q = 2 * np.pi / L
    rhs = -(u / L) + np.sqrt((u / L) ** 2 + 4 * np.cos(q / 2) ** 2)
    return float(L * np.arccos(rhs / 2))


def critical_u(
    model: Model,
    m_o: int,
    *,
    u_cap: float = 20.0,
    du: float = 0.05,
    tol: float = 1e-4,
) -> float:
    """Smallest ``u`` at which the continued chain SP has complex frequencies.

    Returns ``inf`` when no instability appears below ``u_cap``.
    """
    sp = zero_u_sp(model, m_o)
    prev = sp
    u = 0.0
    while u < u_cap:
        u_next = min(u + du, u_cap)
        try:
            sp = continue_sp(model, m_o, u_next, start=prev, steps=max(5, math.ceil(du * 40)))
        except ContinuationError:
            raise
        cls = bogoliubov_spectrum(model.with_u(u_next), sp).classification
        if cls is Stability.UNSTABLE:
            lo, hi = u, u_next
            base = prev
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                s = continue_sp(model, m_o, mid, start=base, steps=20)
                if bogoliubov_spectrum(model.with_u(mid), s).classification is Stability.UNSTABLE:
                    hi = mid
                else:
                    lo, base = mid, s
            return 0.5 * (lo + hi) if lo > 0 or hi > tol else 0.0
        prev = sp
        u = u_next
    return math.inf


# ---------------------------------------------------------------------------
# cross-checks


def match_eigenvalues(closed_form, eigenvalues, *, drop_zero: int = 2) -> float:
    """Largest distance between ``+-omega`` (and conjugates) of the closed forms
    and the eigenvalues of ``W``, after an optimal one-to-one matching.

    The ``drop_zero`` smallest-magnitude eigenvalues (the Goldstone pair) are
    ignored.
    """
    w = np.asarray(list(closed_form), dtype=complex)
    target = np.concatenate([w, -w])
    target = np.where(np.abs(target.imag) > 0, target, target.real + 0j)
    ev = np.asarray(eigenvalues, dtype=complex)
    ev = ev[np.argsort(np.abs(ev))][drop_zero:]
    # complex quartets: W also holds the conjugates
    pool = np.concatenate([target, target.conj()])
    cost = np.abs(ev[:, None] - pool[None, :])
    rows, cols = optimize.linear_sum_assignment(cost)
    covered = np.zeros(len(pool), dtype=bool)
    covered[cols] = True
    # every closed-form value must be hit by an eigenvalue
    d_from_w = float(np.max(cost[rows, cols]))
    d_to_w = float(np.max(np.min(np.abs(target[:, None] - ev[None, :]), axis=1)))
    return max(d_from_w, d_to_w)


def hessian_fd(model: Model, sp: StationaryPoint, h: float = 1e-4) -> np.ndarray:
    """``W`` rebuilt from a central-difference Hessian of ``H/N - mu |psi|^2``.

    Real second derivatives in ``(Re psi, Im psi)`` are turned into the Wirtinger
    blocks ``A = d^2/dpsi* dpsi`` and ``B = d^2/dpsi* dpsi*`` and assembled in
    the same layout as :func:`build_W`.
    """
    m = model.with_u(sp.u)
    D = m.hopping_matrix
    g = m.g
    mu = sp.mu

    def f(z):
        return float(np.real(np.vdot(z, D @ z)) + 0.5 * g * np.sum(np.abs(z) ** 4) - mu * np.sum(np.abs(z) ** 2))

    psi = sp.psi.astype(complex)
    n = len(psi)
    basis = [(j, 1.0) for j in range(n)] + [(j, 1j) for j in range(n)]
    Hr = np.zeros((2 * n, 2 * n))
    for a, (i, si) in enumerate(basis):
        for b, (j, sj) in enumerate(basis[a:], start=a):
            def shifted(p, q):
                z = psi.copy()
                z[i] += p * h * si
                z[j] += q * h * sj
                return f(z)
            val = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) / (4 * h * h)
            Hr[a, b] = Hr[b, a] = val
    xx, yy = Hr[:n, :n], Hr[n:, n:]
    xy = Hr[:n, n:]  # d^2 f / dx_i dy_j
    A = 0.25 * (xx + yy + 1j * (xy.T - xy))
    B = 0.25 * (xx - yy + 1j * (xy.T + xy))
    W = np.block([[A, -B], [B.conj(), -A.conj()]])
    if np.all(np.abs(W.imag) < 1e-12):
        W = W.real
    return W
