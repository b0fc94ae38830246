"""Exact diagonalization and per-eigenstate tomographic observables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fock import (
    FockBlock,
    apply_term,
    build_hamiltonian,
    default_sector,
    make_block,
    occupation_diagonal,
    parse_sector,
    sector_name,
    DEFAULT_BLOCK_CAP,
)
from .lattice import Model, orbital_position

CHUNK = 512


class DiagonalizationError(RuntimeError):
    pass


@dataclass
class EigenSet:
    energies: np.ndarray
    vectors: np.ndarray
    label: int | None
    block: FockBlock

    def __len__(self) -> int:
        return len(self.energies)


@dataclass(frozen=True)
class TomoPoint:
    sector: str
    nu: int
    E: float
    n_o_mean: float
    purity: float

    @property
    def inverse_purity(self) -> float:
        return 1.0 / self.purity


def fix_phases(V: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of every column real and positive."""
    idx = np.argmax(np.abs(V), axis=0)
    piv = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(piv) / piv)[None, :]


def diagonalize(block: FockBlock) -> EigenSet:
    """Full dense eigendecomposition of ``block.H`` (ascending energies)."""
    if block.H is None:
        raise ValueError("block has no Hamiltonian; call build_hamiltonian first")
    try:
        E, V = scipy.linalg.eigh(block.H)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise DiagonalizationError(f"eigensolver failed for block {block.label}: {exc}") from exc
    return EigenSet(E, fix_phases(V), block.label, block)


def occupation_distribution(vectors: np.ndarray, block: FockBlock, model: Model, m_o: int) -> np.ndarray:
    """``P(n_o)`` for ``n_o = 0..N``; one column per eigenvector when 2-D."""
    n = occupation_diagonal(block, model, m_o).astype(int)
    w = np.abs(vectors) ** 2
    if w.ndim == 1:
        return np.bincount(n, weights=w, minlength=model.N + 1)
    out = np.zeros((model.N + 1, w.shape[1]))
    np.add.at(out, n, w)
    return out


def mean_occupations(vectors: np.ndarray, block: FockBlock) -> np.ndarray:
    """``<n_k>`` for every orbital; shape ``(L_s,)`` or ``(L_s, nvec)``."""
    w = np.abs(vectors) ** 2
    return block.states.T.astype(float) @ w


def _hopping_maps(block: FockBlock):
    """Source/target/amplitude arrays of ``b+_k b_k'`` for all ``k != k'``."""
    L_s = block.states.shape[1]
    maps = {}
    for k in range(L_s):
        for kp in range(L_s):
            if k == kp:
                continue
            src, occ, amp = apply_term(block, (k,), (kp,))
            tgt, found = block.locate(occ)
            # transitions out of the block cannot contribute to in-block expectations
            maps[(k, kp)] = (src[found], tgt[found], amp[found])
    return maps


def one_body_orbital(vectors: np.ndarray, block: FockBlock, maps=None) -> np.ndarray:
    """Orbital-basis ``rho~_{kk'} = <b+_k b_k'> / N``.

    Off-diagonal elements are generated on the fly from the block states.
    Returns ``(L_s, L_s)`` for one vector or ``(nvec, L_s, L_s)`` for columns.
    """
    single = vectors.ndim == 1
    V = vectors[:, None] if single else vectors
    L_s = block.states.shape[1]
    N = block.N
    if maps is None:
        maps = _hopping_maps(block)
    rho = np.zeros((V.shape[1], L_s, L_s), dtype=complex)
    occ = block.states.astype(float)
    for lo in range(0, V.shape[1], CHUNK):
        Vc = V[:, lo:lo + CHUNK]
        w = np.abs(Vc) ** 2
        rho[lo:lo + CHUNK, np.arange(L_s), np.arange(L_s)] = (occ.T @ w).T
        for (k, kp), (src, tgt, amp) in maps.items():
            if src.size == 0:
                continue
            rho[lo:lo + CHUNK, k, kp] = np.einsum("ij,ij->j", Vc[tgt].conj(), amp[:, None] * Vc[src])
    rho /= N
    if np.all(np.abs(rho.imag) < 1e-14):
        rho = rho.real.copy()
    return rho[0] if single else rho


def to_site_basis(rho_orb: np.ndarray, model: Model) -> np.ndarray:
    """``rho_site = conj(F) rho~ F^T`` (works on stacks of matrices)."""
    F = model.orbital_matrix
    return F.conj() @ rho_orb @ F.T


def one_body_matrix(vector: np.ndarray, block: FockBlock, model: Model) -> np.ndarray:
    """Site-basis one-body matrix ``rho_ij = <a+_i a_j> / N``."""
    return to_site_basis(one_body_orbital(vector, block), model)


def purity(rho: np.ndarray) -> np.ndarray | float:
    """``Tr rho^2`` for a Hermitian matrix (or a stack of them)."""
    s = np.sum(np.abs(rho) ** 2, axis=(-2, -1))
    return float(s) if np.ndim(s) == 0 else s


def tomography_points(es: EigenSet, model: Model, m_o: int) -> list[TomoPoint]:
    block = es.block
    n_o = mean_occupations(es.vectors, block)[orbital_position(model, m_o)]
    S = purity(one_body_orbital(es.vectors, block))
    name = sector_name(model, es.label) if es.label is not None else "all"
    return [
        TomoPoint(name, nu, float(E), float(n), float(s))
        for nu, (E, n, s) in enumerate(zip(es.energies, n_o, S))
    ]


def solve_sector(model: Model, sector=None, *, cap: int = DEFAULT_BLOCK_CAP) -> EigenSet:
    block = build_hamiltonian(model, make_block(model, sector, cap=cap))
    return diagonalize(block)


def tomographic_spectrum(
    model: Model,
    m_o: int,
    sectors=None,
    *,
    cap: int = DEFAULT_BLOCK_CAP,
) -> list[TomoPoint]:
    """Tomographic points ``(E, <n_o>, S)`` for all eigenstates of the sectors.

    ``sectors`` defaults to ``P = 0`` (ring) or even parity (chain); pass
    ``"all"`` for every sector.
    """
    if sectors is None:
        sectors = [default_sector(model)]
    elif sectors == "all":
        sectors = list(range(model.L_s)) if model.is_ring else [1, -1]
    elif isinstance(sectors, (int, str)):
        sectors = [sectors]
    out = []
    for s in sectors:
        es = solve_sector(model, parse_sector(model, s), cap=cap)
        out.extend(tomography_points(es, model, m_o))
    return out
