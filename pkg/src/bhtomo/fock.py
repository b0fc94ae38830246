"""Many-body Fock space in the orbital basis.

States are occupation vectors ``n[i]`` over orbital columns (``m`` ascending).
Ring blocks are labelled by total momentum ``P = sum m n_m mod L_s``; chain
blocks by mirror parity. The site reflection ``j -> L_s + 1 - j`` multiplies the
sine orbital ``m`` by ``(-1)^(m+1)``, so it is diagonal on orbital Fock states with
eigenvalue ``(-1)^(number of bosons in even-m orbitals)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Model, interaction_tensor, orbital_indices, orbital_position

DEFAULT_BLOCK_CAP = 12000
DEFAULT_BASIS_CAP = 2_000_000


class DimensionError(MemoryError):
    """Requested basis or block exceeds the configured size cap."""

    def __init__(self, message: str, dimension: int):
        super().__init__(message)
        self.dimension = dimension


def fock_dimension(L_s: int, N: int) -> int:
    return math.comb(N + L_s - 1, L_s - 1)


def enumerate_basis(model: Model, cap: int = DEFAULT_BASIS_CAP) -> np.ndarray:
    """All occupation vectors with ``sum n = N``, in lexicographic order.

    Returns an integer array of shape ``(dim, L_s)``.
    """
    L_s, N = model.L_s, model.N
    dim = fock_dimension(L_s, N)
    if dim > cap:
        raise DimensionError(f"Fock dimension {dim} exceeds the cap of {cap}", dim)
    # stars and bars: bar positions among N + L_s - 1 slots
    bars = np.array(list(itertools.combinations(range(N + L_s - 1), L_s - 1)), dtype=np.int64)
    edges = np.concatenate(
        [np.full((dim, 1), -1), bars, np.full((dim, 1), N + L_s - 1)], axis=1
    )
    return np.diff(edges, axis=1) - 1


def state_keys(occ: np.ndarray, N: int) -> np.ndarray:
    """Integer key ``sum n_i (N+1)^i`` (unique per occupation vector)."""
    weights = (N + 1) ** np.arange(occ.shape[1], dtype=np.int64)
    return occ @ weights


def sector_labels(model: Model, occ: np.ndarray) -> np.ndarray:
    """Symmetry label of each state: total momentum ``0..L_s-1`` or parity ``+-1``."""
    ms = orbital_indices(model)
    if model.is_ring:
        return (occ @ ms) % model.L_s
    odd_orbitals = (ms % 2 == 0).astype(np.int64)
    return 1 - 2 * ((occ @ odd_orbitals) % 2)


def parse_sector(model: Model, sector) -> int:
    """Normalize a user-facing sector label (``"even"``, ``"odd"``, ``"+"``, ``"P2"``, ints)."""
    if model.is_ring:
        if isinstance(sector, str):
            sector = sector.strip().upper().removeprefix("P").lstrip("=")
        return int(sector) % model.L_s
    if isinstance(sector, str):
        s = sector.strip().lower()
        if s in ("even", "+", "+1", "1"):
            return 1
        if s in ("odd", "-", "-1"):
            return -1
        raise ValueError(f"unknown chain sector {sector!r}")
    if int(sector) in (1, -1):
        return int(sector)
    raise ValueError(f"chain sector must be +1/-1, got {sector!r}")


def sector_name(model: Model, label: int) -> str:
    if model.is_ring:
        return f"P{int(label)}"
    return "even" if label > 0 else "odd"


def default_sector(model: Model) -> int:
    """``P = 0`` for rings and even parity for chains."""
    return 0 if model.is_ring else 1


def condensate_sector(model: Model, m_o: int) -> int:
    """Sector that holds the state with all ``N`` bosons in orbital ``m_o``."""
    occ = np.zeros((1, model.L_s), dtype=np.int64)
    occ[0, orbital_position(model, m_o)] = model.N
    return int(sector_labels(model, occ)[0])


@dataclass
class FockBlock:
    label: int | None
    states: np.ndarray
    H: np.ndarray | None = None
    keys: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.keys is None:
            N = int(self.states[0].sum()) if len(self.states) else 0
            self.keys = state_keys(self.states, N)
        if np.any(np.diff(self.keys) <= 0):
            order = np.argsort(self.keys)
            self.states = self.states[order]
            self.keys = self.keys[order]

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def N(self) -> int:
        return int(self.states[0].sum())

    def locate(self, occ: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Indices of ``occ`` rows in this block and a mask of which were found."""
        k = state_keys(occ, self.N)
        pos = np.searchsorted(self.keys, k)
        pos = np.minimum(pos, self.dim - 1)
        return pos, self.keys[pos] == k


def symmetry_blocks(model: Model, basis: np.ndarray | None = None) -> dict[int, np.ndarray]:
    """Partition the basis into symmetry sectors: ``{label: row indices}``."""
    if basis is None:
        basis = enumerate_basis(model)
    labels = sector_labels(model, basis)
    return {int(s): np.flatnonzero(labels == s) for s in np.unique(labels)}


def make_block(
    model: Model,
    sector=None,
    *,
    cap: int = DEFAULT_BLOCK_CAP,
    basis: np.ndarray | None = None,
) -> FockBlock:
    """Basis states of one sector (``sector=None`` keeps the full basis)."""
    if basis is None:
        basis = enumerate_basis(model)
    if sector is None:
        states, label = basis, None
    else:
        label = parse_sector(model, sector)
        states = basis[sector_labels(model, basis) == label]
    if len(states) > cap:
        raise DimensionError(
            f"block {sector_name(model, label) if label is not None else 'full'} has "
            f"{len(states)} states, above the cap of {cap}",
            len(states),
        )
    return FockBlock(label, states)


def apply_term(block: FockBlock, create: tuple[int, ...], annihilate: tuple[int, ...], src: np.ndarray | None = None):
    """Apply ``prod b+_create prod b_annihilate`` to block states.

    Annihilators act right to left (last index first). Returns
    ``(src_idx, target_occ, amplitude)`` for states with non-zero amplitude.
    """
    occ = block.states if src is None else block.states[src]
    idx = np.arange(len(occ)) if src is None else np.asarray(src)
    occ = occ.copy()
    amp = np.ones(len(occ))
    for i in reversed(annihilate):
        amp *= np.sqrt(np.maximum(occ[:, i], 0))
        occ[:, i] -= 1
    alive = amp > 0
    occ, amp, idx = occ[alive], amp[alive], idx[alive]
    for i in reversed(create):
        amp *= np.sqrt(occ[:, i] + 1)
        occ[:, i] += 1
    return idx, occ, amp


def build_hamiltonian(model: Model, block: FockBlock, *, strict: bool = True) -> FockBlock:
    """Fill ``block.H`` with the dense many-body Hamiltonian.

    ``H = sum eps n + (U / 2L) sum C b+ b+ b b`` with exact bosonic factors. With
    ``strict`` a transition leaving the block raises, which guards the sector
    bookkeeping; with ``strict=False`` such elements are dropped (used for the
    full-basis cross-sector check).
    """
    eps = model.orbital_energies
    C = interaction_tensor(model)
    complex_needed = np.iscomplexobj(C.value) or np.iscomplexobj(eps)
    H = np.zeros((block.dim, block.dim), dtype=complex if complex_needed else float)
    H[np.diag_indices(block.dim)] = block.states @ np.real(eps)
    if model.U != 0:
        pref = model.U / (2 * model.L)
        for (a, b, c, d), val in zip(C.index, C.value):
            src, occ, amp = apply_term(block, (a, b), (c, d))
            if src.size == 0:
                continue
            tgt, found = block.locate(occ)
            if not found.all():
                if strict:
                    raise RuntimeError(
                        f"operator b+{a} b+{b} b{c} b{d} left block {block.label}"
                    )
                src, tgt, amp = src[found], tgt[found], amp[found]
            H[tgt, src] += pref * val * amp
    block.H = H
    return block


def occupation_diagonal(block: FockBlock, model: Model, m_o: int) -> np.ndarray:
    """Diagonal of ``n_{k_o}`` over the block states."""
    return block.states[:, orbital_position(model, m_o)].astype(float)


def hamiltonian_block(model: Model, sector=None, *, cap: int = DEFAULT_BLOCK_CAP) -> FockBlock:
    """Convenience: enumerate, select ``sector`` and build ``H``."""
    return build_hamiltonian(model, make_block(model, sector, cap=cap))


def write_hamiltonian_csv(block: FockBlock, path, tol: float = 0.0) -> int:
    """Dump the non-zero entries of ``H`` as ``row,col,re,im``; returns the count."""
    H = block.H
    rows, cols = np.nonzero(np.abs(H) > tol)
    vals = H[rows, cols]
    data = np.column_stack([rows, cols, np.real(vals), np.imag(vals)])
    np.savetxt(path, data, delimiter=",", header="row,col,re,im", comments="",
               fmt=["%d", "%d", "%.17g", "%.17g"])
    return len(rows)
