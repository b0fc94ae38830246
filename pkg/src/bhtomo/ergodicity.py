"""Quantum ergodicity measures and phonon content of many-body eigenstates."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .bogoliubov import ZERO_TOL, BogoSpectrum, bogoliubov_spectrum
from .fock import (
    DEFAULT_BLOCK_CAP,
    FockBlock,
    apply_term,
    build_hamiltonian,
    condensate_sector,
    make_block,
    parse_sector,
    sector_name,
    symmetry_blocks,
)
from .lattice import Model, orbital_position
from .stationary import StationaryPoint, coherent_energy, continue_sp
from .tomography import (
    EigenSet,
    TomoPoint,
    diagonalize,
    fix_phases,
    mean_occupations,
    occupation_distribution,
    one_body_orbital,
    purity,
    solve_sector,
)

log = logging.getLogger(__name__)

WINDOW_FRACTION = 0.02
MIN_WINDOW_STATES = 10
OVERLAP_FLOOR = 1e-3
MULTI = "multi"


# ---------------------------------------------------------------------------
# microcanonical statistics


@dataclass(frozen=True)
class MicrocanonicalWindow:
    E_center: float
    half_width: float
    members: np.ndarray

    @property
    def low_statistics(self) -> bool:
        return len(self.members) < MIN_WINDOW_STATES


def energy_window(
    energies: np.ndarray,
    E_center: float,
    half_width: float | None = None,
    *,
    min_states: int = MIN_WINDOW_STATES,
) -> MicrocanonicalWindow:
    """States with ``|E - E_center| <= half_width``.

    The default half-width is 2% of the spectral span. If fewer than
    ``min_states`` fall inside, the window is widened to the ``min_states``
    nearest levels.
    """
    E = np.asarray(energies)
    if half_width is None:
        half_width = WINDOW_FRACTION * float(E.max() - E.min())
    members = np.flatnonzero(np.abs(E - E_center) <= half_width)
    if len(members) < min_states and len(E) >= min_states:
        members = np.sort(np.argsort(np.abs(E - E_center))[:min_states])
        half_width = float(np.max(np.abs(E[members] - E_center)))
    return MicrocanonicalWindow(float(E_center), float(half_width), members)


def _member_distributions(eigensets, window, model, m_o) -> np.ndarray:
    """Columns ``P^nu(n_o)`` for the window members across one or more eigensets."""
    if isinstance(eigensets, EigenSet):
        eigensets = [eigensets]
    offsets = np.cumsum([0] + [len(es) for es in eigensets])
    cols = []
    for i, es in enumerate(eigensets):
        sel = window.members[(window.members >= offsets[i]) & (window.members < offsets[i + 1])] - offsets[i]
        if sel.size:
            cols.append(occupation_distribution(es.vectors[:, sel], es.block, model, m_o))
    if not cols:
        raise ValueError("empty energy window")
    return np.concatenate(cols, axis=1)


def combined_energies(eigensets) -> np.ndarray:
    if isinstance(eigensets, EigenSet):
        return eigensets.energies
    return np.concatenate([es.energies for es in eigensets])


def microcanonical_distribution(eigensets, window: MicrocanonicalWindow, model: Model, m_o: int) -> np.ndarray:
    """``P^E(n_o)``: the average of ``P^nu(n_o)`` over the window members."""
    P = _member_distributions(eigensets, window, model, m_o)
    return P.mean(axis=1)


def sigma_measure(eigensets, window: MicrocanonicalWindow, model: Model, m_o: int) -> float:
    """RMS of ``P^nu(n_o) - P^E(n_o)`` over window members and all bins ``0..N``."""
    P = _member_distributions(eigensets, window, model, m_o)
    if window.low_statistics:
        log.warning("sigma computed from %d states (low statistics)", P.shape[1])
    PE = P.mean(axis=1, keepdims=True)
    return float(np.sqrt(np.mean((P - PE) ** 2)))


def occupation_histogram(n_o_fraction: np.ndarray, N: int) -> np.ndarray:
    """Histogram of ``n_o / N`` on the ``N + 1`` bins centred at ``n / N``."""
    edges = (np.arange(N + 2) - 0.5) / N
    h, _ = np.histogram(np.clip(n_o_fraction, 0, 1), bins=edges)
    return h / max(h.sum(), 1)


# ---------------------------------------------------------------------------
# fingerprints


def max_condensate_fingerprint(points: list[TomoPoint]) -> tuple[float, float, int]:
    """``(n_max, S_max, nu)`` of the eigenstate with the largest ``<n_o>``.

    Ties go to the lower energy.
    """
    if not points:
        raise ValueError("empty tomographic spectrum")
    best = min(range(len(points)), key=lambda i: (-points[i].n_o_mean, points[i].E))
    p = points[best]
    return p.n_o_mean, p.purity, p.nu


def _sector_list(model: Model, m_o: int, sectors) -> list[int]:
    if sectors is None:
        return [condensate_sector(model, m_o)]
    if sectors == "all":
        return list(range(model.L_s)) if model.is_ring else [1, -1]
    if isinstance(sectors, (int, str)):
        sectors = [sectors]
    return [parse_sector(model, s) for s in sectors]


@dataclass(frozen=True)
class Fingerprint:
    n_max: float
    S_max: float
    nu: int
    sector: str


def fingerprint(model: Model, m_o: int, sectors=None, *, cap: int = DEFAULT_BLOCK_CAP) -> Fingerprint:
    """``n_max`` and ``S_max`` over the given sectors (default: the sector of the condensate).

    Only the winning eigenstate's one-body matrix is evaluated.
    """
    io = orbital_position(model, m_o)
    best = None
    for s in _sector_list(model, m_o, sectors):
        es = solve_sector(model, s, cap=cap)
        n = mean_occupations(es.vectors, es.block)[io]
        i = int(np.lexsort((es.energies, -n))[0])
        key = (-n[i], es.energies[i])
        if best is None or key < best[0]:
            best = (key, es, i)
    _, es, i = best
    S = purity(one_body_orbital(es.vectors[:, i], es.block))
    return Fingerprint(float(-best[0][0]), float(S), i, sector_name(model, es.label))


def sigma_at_sp(
    model: Model,
    m_o: int,
    sectors=None,
    *,
    half_width: float | None = None,
    cap: int = DEFAULT_BLOCK_CAP,
) -> tuple[float, MicrocanonicalWindow, np.ndarray]:
    """``(sigma, window, P^E)`` in the window around the SP energy."""
    sp = continue_sp(model, m_o)
    sets = [solve_sector(model, s, cap=cap) for s in _sector_list(model, m_o, sectors)]
    win = energy_window(combined_energies(sets), coherent_energy(model, sp.psi), half_width)
    return sigma_measure(sets, win, model, m_o), win, microcanonical_distribution(sets, win, model, m_o)


# ---------------------------------------------------------------------------
# number-conserving quasiparticles


@dataclass(frozen=True)
class Quasiparticle:
    """Bogoliubov mode as a one-body operator ``C+ = (1/sqrt N) sum M_kk' b+_k b_k'``.

    ``U`` and ``V`` are the site-basis mode functions with ``|U|^2 - |V|^2 = 1``;
    ``u`` and ``v`` are their norms.
    """

    omega: float
    U: np.ndarray
    V: np.ndarray
    M: np.ndarray

    @property
    def u(self) -> float:
        return float(np.linalg.norm(self.U))

    @property
    def v(self) -> float:
        return float(np.linalg.norm(self.V))


def quasiparticle_coefficients(sp: StationaryPoint, spec: BogoSpectrum, q: int, model: Model) -> Quasiparticle:
    """Quasiparticle operator for the ``q``-th physical mode of ``spec``.

    An eigenvector ``(x, y)`` of ``W`` gives ``U = x`` and ``V = -y``; the
    operator is ``C+ = sum_j (U_j da+_j - V_j da_j)`` with the number-conserving
    fluctuation ``da_j = a+_0 a_j / sqrt N`` around the condensate mode ``a_0``.
    """
    w = spec.omega[q]
    if abs(w.imag) > 1e-8 * max(1, abs(w)):
        raise ValueError("quasiparticles are defined for real modes only")
    n = model.L_s
    vec = spec.modes[:, q]
    U, V = vec[:n], -vec[n:]
    norm = np.vdot(U, U).real - np.vdot(V, V).real
    if norm <= 0:
        raise ValueError("mode has non-positive symplectic norm")
    U, V = U / math.sqrt(norm), V / math.sqrt(norm)
    # gauge: largest U component real positive
    i = np.argmax(np.abs(U))
    ph = abs(U[i]) / U[i]
    U, V = U * ph, V * ph
    F = model.orbital_matrix
    Ut = F.conj().T @ U
    pt = F.conj().T @ sp.psi
    Vt = F.T @ V
    M = np.outer(Ut, pt.conj()) - np.outer(pt, Vt)
    return Quasiparticle(float(w.real), U, V, M)


def ring_quasiparticle_ratio(model: Model, m_o: int, q: float) -> tuple[float, float]:
    """Analytic ``(omega, V/U)`` for the ring pair ``k_o +- q``.

    From the 2x2 block ``[[E+, D], [-D, -E-]]`` with
    ``E+- = eps_par +- eps_perp + D`` and ``D = N U / L``.
    """
    from .bogoliubov import ring_excitation_energies

    par, perp = ring_excitation_energies(model, m_o, q)
    D = model.delta
    Ep, Em = par + perp + D, par - perp + D
    M = np.array([[Ep, D], [-D, -Em]])
    w, vecs = np.linalg.eig(M)
    best = None
    for a in range(2):
        x, y = vecs[:, a]
        nrm = abs(x) ** 2 - abs(y) ** 2
        if nrm > 0:
            best = (float(w[a].real), float((y / x).real))
    if best is None:
        raise ValueError("no positive-norm solution in the ring block")
    return best


# ---------------------------------------------------------------------------
# synthetic excitations


class FullSpace:
    """The unblocked Fock basis plus cached one-body transition maps."""

    def __init__(self, model: Model):
        self.model = model
        self.block = make_block(model, None, cap=10**7)
        self._maps: dict[tuple[int, int], tuple] = {}

    @property
    def dim(self) -> int:
        return self.block.dim

    def embed(self, vectors: np.ndarray, block: FockBlock) -> np.ndarray:
        """Lift block-basis vectors into the full basis."""
        pos, found = self.block.locate(block.states)
        if not found.all():
            raise RuntimeError("block state missing from the full basis")
        shape = (self.dim,) + vectors.shape[1:]
        out = np.zeros(shape, dtype=vectors.dtype)
        out[pos] = vectors
        return out

    def hop_map(self, k: int, kp: int):
        key = (k, kp)
        if key not in self._maps:
            src, occ, amp = apply_term(self.block, (k,), (kp,))
            tgt, found = self.block.locate(occ)
            self._maps[key] = (src[found], tgt[found], amp[found])
        return self._maps[key]

    def apply_one_body(self, M: np.ndarray, vec: np.ndarray, tol: float = 1e-14) -> np.ndarray:
        """``(sum M_kk' b+_k b_k') vec``."""
        out = np.zeros(self.dim, dtype=np.result_type(M, vec, complex))
        L_s = M.shape[0]
        occ = self.block.states
        for k in range(L_s):
            if abs(M[k, k]) > tol:
                out += M[k, k] * occ[:, k] * vec
            for kp in range(L_s):
                if kp == k or abs(M[k, kp]) <= tol:
                    continue
                src, tgt, amp = self.hop_map(k, kp)
                np.add.at(out, tgt, M[k, kp] * amp * vec[src])
        return out


@dataclass
class SyntheticSet:
    """Orthonormalized synthetic states with their phonon multi-indices."""

    labels: list[tuple[int, ...]]
    states: np.ndarray  # (dim, count) full-basis columns

    def phonons(self, i: int) -> int:
        return len(self.labels[i])


def synthetic_excitations(
    space: FullSpace,
    reference: np.ndarray,
    quasiparticles: list[Quasiparticle],
    max_phonons: int = 3,
    *,
    orthonormalize: bool = True,
) -> SyntheticSet:
    """Apply products of ``C+_q`` to ``reference`` (a full-basis vector).

    Every multi-index with at most ``max_phonons`` quanta is generated. States
    are normalized, and with ``orthonormalize`` Gram-Schmidt is applied within
    each phonon number.
    """
    N = space.model.N
    ref = reference / np.linalg.norm(reference)
    cache: dict[tuple[int, ...], np.ndarray] = {(): ref.astype(complex)}
    labels: list[tuple[int, ...]] = [()]
    for n in range(1, max_phonons + 1):
        for combo in itertools.combinations_with_replacement(range(len(quasiparticles)), n):
            parent = cache[combo[:-1]]
            qp = quasiparticles[combo[-1]]
            cache[combo] = space.apply_one_body(qp.M / math.sqrt(N), parent)
            labels.append(combo)
    cols, kept = [], []
    for n in range(max_phonons + 1):
        basis: list[np.ndarray] = []
        for lab in (l for l in labels if len(l) == n):
            v = cache[lab].copy()
            nrm0 = np.linalg.norm(v)
            if nrm0 < 1e-12:
                log.warning("synthetic state %s vanished; dropped", lab)
                continue
            v /= nrm0
            if orthonormalize:
                for b in basis:
                    v -= np.vdot(b, v) * b
            nrm = np.linalg.norm(v)
            if nrm < 1e-8:
                log.warning("synthetic state %s is linearly dependent; dropped", lab)
                continue
            v /= nrm
            basis.append(v)
            kept.append(lab)
        cols.extend(basis)
    return SyntheticSet(kept, np.array(cols).T)


@dataclass(frozen=True)
class PhononLabel:
    n_phonons: int | str
    weight: float
    zero_weight: bool = False


def classify_phonon_content(eigenstate: np.ndarray, synthetic: SyntheticSet, max_phonons: int = 3) -> PhononLabel:
    """Phonon number of the synthetic state with the largest overlap."""
    w = np.abs(synthetic.states.conj().T @ eigenstate) ** 2
    i = int(np.argmax(w))
    if w[i] < OVERLAP_FLOOR:
        return PhononLabel(MULTI, float(w[i]), True)
    n = synthetic.phonons(i)
    return PhononLabel(n if n <= max_phonons else MULTI, float(w[i]))


def lowest_states(block: FockBlock, k: int) -> EigenSet:
    """The ``k`` lowest eigenpairs of a block (dense below 600 states)."""
    H = block.H
    k = min(k, block.dim)
    if block.dim <= 600 or k >= block.dim - 1:
        E, V = scipy.linalg.eigh(H, subset_by_index=[0, k - 1])
    else:
        Hs = scipy.sparse.csr_matrix(H)
        E, V = scipy.sparse.linalg.eigsh(Hs, k=k, which="SA", tol=1e-12)
        order = np.argsort(E)
        E, V = E[order], V[:, order]
    return EigenSet(E, fix_phases(V), block.label, block)


@dataclass
class PhononAnalysis:
    """Phonon content of eigenstates around a reference state.

    ``gap[q]`` is the energy above the reference of the eigenstate with the
    largest overlap on ``C+_q |ref>``; ``overlap[q]`` is that overlap.
    """

    reference_energy: float
    omega: np.ndarray
    gap: np.ndarray
    overlap: np.ndarray
    energies: np.ndarray
    labels: list[PhononLabel]

    @property
    def mean_weight(self) -> float:
        return float(np.mean([lab.weight for lab in self.labels]))


def phonon_analysis(
    model: Model,
    m_o: int,
    *,
    reference: str = "ground",
    n_states: int = 40,
    max_phonons: int = 3,
    cap: int = DEFAULT_BLOCK_CAP,
) -> PhononAnalysis:
    """Classify eigenstates by their overlap with synthetic phonon states.

    ``reference="ground"`` builds phonons on the many-body ground state and
    classifies the ``n_states`` lowest levels of every sector. With
    ``"excited"`` the reference is the eigenstate of largest ``<n_o>`` in the
    energy window around the SP energy, and the ``n_states`` levels of each
    sector nearest to it are classified (full diagonalization).
    """
    if reference not in ("ground", "excited"):
        raise ValueError(f"reference must be 'ground' or 'excited', got {reference!r}")
    sp = continue_sp(model, m_o)
    spec = bogoliubov_spectrum(model, sp)
    qps = [
        quasiparticle_coefficients(sp, spec, q, model)
        for q in range(len(spec.omega))
        if abs(spec.omega[q].imag) <= 1e-8 and abs(spec.omega[q]) > ZERO_TOL
    ]
    space = FullSpace(model)
    sectors = sorted(symmetry_blocks(model, space.block.states))
    sets = []
    for s in sectors:
        block = build_hamiltonian(model, make_block(model, s, cap=cap, basis=space.block.states))
        sets.append(lowest_states(block, n_states) if reference == "ground" else diagonalize(block))

    if reference == "ground":
        i_set = int(np.argmin([es.energies[0] for es in sets]))
        i_ref = 0
    else:
        E_all = combined_energies(sets)
        win = energy_window(E_all, coherent_energy(model, sp.psi))
        n_o = np.concatenate([mean_occupations(es.vectors, es.block)[orbital_position(model, m_o)] for es in sets])
        best = win.members[np.argmax(n_o[win.members])]
        offsets = np.cumsum([0] + [len(es) for es in sets])
        i_set = int(np.searchsorted(offsets, best, side="right") - 1)
        i_ref = int(best - offsets[i_set])
    E_ref = float(sets[i_set].energies[i_ref])
    ref = space.embed(sets[i_set].vectors[:, i_ref], sets[i_set].block)

    E_list, V_list = [], []
    for es in sets:
        if reference == "ground":
            sel = np.arange(len(es))
        else:
            sel = np.sort(np.argsort(np.abs(es.energies - E_ref))[:n_states])
        E_list.append(es.energies[sel])
        V_list.append(space.embed(es.vectors[:, sel], es.block))
    energies = np.concatenate(E_list)
    vecs = np.concatenate(V_list, axis=1)
    order = np.argsort(energies, kind="stable")
    energies, vecs = energies[order], vecs[:, order]

    gap, overlap = [], []
    for qp in qps:
        s = space.apply_one_body(qp.M / math.sqrt(model.N), ref)
        s /= np.linalg.norm(s)
        ov = np.abs(vecs.conj().T @ s) ** 2
        j = int(np.argmax(ov))
        gap.append(energies[j] - E_ref)
        overlap.append(ov[j])

    synth = synthetic_excitations(space, ref, qps, max_phonons)
    labels = [classify_phonon_content(vecs[:, j], synth, max_phonons) for j in range(vecs.shape[1])]
    return PhononAnalysis(E_ref, np.array([qp.omega for qp in qps]), np.array(gap), np.array(overlap), energies, labels)
