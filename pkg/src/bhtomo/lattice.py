"""Bose-Hubbard rings and chains: model parameters, orbitals and interaction tensor.

Units follow the usual tight-binding conventions: lattice constant 1, site
positions ``x_j = j`` for ``j = 1..L_s``, and energies in units where the hopping
``K`` defaults to 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

TENSOR_CUTOFF = 1e-12


class Geometry(str, enum.Enum):
    RING = "ring"
    CHAIN = "chain"

    @classmethod
    def parse(cls, value: "Geometry | str") -> "Geometry":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown geometry {value!r}; expected 'ring' or 'chain'") from None


@dataclass(frozen=True)
class Model:
    """An ``L_s``-site Bose-Hubbard ring or chain with ``N`` bosons.

    Only the primary parameters are stored; everything else is derived so the
    dimensionless combinations can never drift out of sync.
    """

    geometry: Geometry
    L_s: int
    N: int
    K: float = 1.0
    U: float = 0.0
    Phi: float = 0.0

    @property
    def is_ring(self) -> bool:
        return self.geometry is Geometry.RING

    @property
    def L(self) -> int:
        """Length of the orbital box (``L_s`` for a ring, ``L_s + 1`` for a chain)."""
        return self.L_s if self.is_ring else self.L_s + 1

    @property
    def u(self) -> float:
        return self.N * self.U / self.K

    @property
    def u_L(self) -> float:
        return self.L * self.u

    @property
    def g(self) -> float:
        """Mean-field coupling ``N U`` in energy units (equals ``u K``)."""
        return self.N * self.U

    @property
    def delta(self) -> float:
        """Potential-floor shift ``N U / L``."""
        return self.N * self.U / self.L

    @property
    def hop_phase(self) -> complex:
        """Phase factor ``exp(i Phi / L_s)`` carried by each ring bond."""
        return complex(np.exp(1j * self.Phi / self.L_s))

    @property
    def phi(self) -> float:
        """Alias for the Sagnac phase; the unfolded phase is ``Phi - 2 pi m_o``."""
        return self.Phi

    def with_u(self, u: float) -> "Model":
        return Model(self.geometry, self.L_s, self.N, self.K, u * self.K / self.N, self.Phi)

    def with_phi(self, Phi: float) -> "Model":
        return build_model(self.geometry, self.L_s, self.N, self.K, self.U, Phi)

    def with_N(self, N: int) -> "Model":
        """Same ``u`` with a different particle number."""
        return build_model(self.geometry, self.L_s, N, self.K, u=self.u, Phi=self.Phi)

    @cached_property
    def hopping_matrix(self) -> np.ndarray:
        """Single-particle matrix ``D`` in the site basis."""
        return hopping_matrix(self)

    @cached_property
    def orbital_matrix(self) -> np.ndarray:
        """``F[j, i] = <x_j|k_i>``; columns are orbitals ordered by ``m``."""
        return orbital_matrix(self)

    @cached_property
    def orbital_energies(self) -> np.ndarray:
        return orbital_energies(self)


def build_model(
    geometry: Geometry | str,
    L_s: int,
    N: int,
    K: float = 1.0,
    U: float | None = None,
    Phi: float = 0.0,
    *,
    u: float | None = None,
) -> Model:
    """Validate parameters and return a :class:`Model`.

    Exactly one of ``U`` (bare interaction) or ``u = N U / K`` may be given;
    with neither the model is non-interacting.
    """
    geometry = Geometry.parse(geometry)
    if int(L_s) != L_s or L_s < 2:
        raise ValueError(f"L_s must be an integer >= 2, got {L_s}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be an integer >= 1, got {N}")
    if not K > 0:
        raise ValueError(f"K must be positive, got {K}")
    if U is not None and u is not None:
        raise ValueError("give either U or u, not both")
    if u is not None:
        U = u * K / N
    U = 0.0 if U is None else float(U)
    if U < 0:
        raise ValueError(f"U must be non-negative, got {U}")
    if geometry is Geometry.CHAIN and Phi != 0:
        raise ValueError("a chain carries no Sagnac phase (Phi must be 0)")
    return Model(geometry, int(L_s), int(N), float(K), U, float(Phi))


def sites(model: Model) -> np.ndarray:
    return np.arange(1, model.L_s + 1, dtype=float)


def orbital_indices(model: Model) -> np.ndarray:
    """Orbital labels ``m``: ``0..L-1`` for a ring, ``1..L_s`` for a chain."""
    if model.is_ring:
        return np.arange(model.L_s)
    return np.arange(1, model.L_s + 1)


def orbital_position(model: Model, m: int) -> int:
    """Column index of orbital ``m`` in :func:`orbital_matrix`."""
    ms = orbital_indices(model)
    if model.is_ring:
        m = m % model.L_s
    hits = np.flatnonzero(ms == m)
    if hits.size == 0:
        raise ValueError(f"no orbital m={m} for a {model.geometry.value} with L_s={model.L_s}")
    return int(hits[0])


def wavenumbers(model: Model) -> np.ndarray:
    ms = orbital_indices(model)
    if model.is_ring:
        return 2 * np.pi * ms / model.L
    return np.pi * ms / model.L


def orbital_matrix(model: Model) -> np.ndarray:
    x = sites(model)
    k = wavenumbers(model)
    if model.is_ring:
        return np.exp(1j * np.outer(x, k)) / math.sqrt(model.L)
    return math.sqrt(2.0 / model.L) * np.sin(np.outer(x, k))


def orbital_energies(model: Model) -> np.ndarray:
    k = wavenumbers(model)
    if model.is_ring:
        return -model.K * np.cos(k - model.Phi / model.L)
    return -model.K * np.cos(k)


def hopping_matrix(model: Model) -> np.ndarray:
    L_s = model.L_s
    half = -model.K / 2
    if model.is_ring:
        D = np.zeros((L_s, L_s), dtype=complex)
        for j in range(L_s):
            D[(j + 1) % L_s, j] += half * model.hop_phase
            D[j, (j + 1) % L_s] += half * np.conj(model.hop_phase)
        if model.Phi == 0:
            D = D.real.copy()
        return D
    D = np.zeros((L_s, L_s))
    idx = np.arange(L_s - 1)
    D[idx + 1, idx] = half
    D[idx, idx + 1] = half
    return D


@dataclass(frozen=True)
class Orbital:
    m: int
    k: float
    energy: float
    kinetic: float
    coefficients: np.ndarray


def orbitals(model: Model) -> list[Orbital]:
    """Single-particle orbitals with energies and ``E_k = eps_k - eps_floor``.

    The potential floor is ``-K`` for both geometries.
    """
    F = model.orbital_matrix
    eps = model.orbital_energies
    floor = -model.K
    return [
        Orbital(int(m), float(k), float(e), float(e - floor), F[:, i].copy())
        for i, (m, k, e) in enumerate(zip(orbital_indices(model), wavenumbers(model), eps))
    ]


def energy_floor(model: Model) -> float:
    return -model.K


def dimensionless_params(model: Model, m_o: int) -> dict[str, float]:
    """Interaction parameters that control the stability of an ``m_o`` condensate.

    ``gpe_param`` is ``Delta / E`` using the exact lattice kinetic energy of the
    orbital; it is ``inf`` when that energy vanishes with ``Delta > 0`` (and 0
    when both vanish).
    """
    i = orbital_position(model, m_o)
    e_kin = float(model.orbital_energies[i] + model.K)
    delta = model.delta
    if abs(e_kin) < 1e-15:
        gpe = 0.0 if delta == 0 else math.inf
    else:
        gpe = delta / e_kin
    return {
        "u": model.u,
        "u_L": model.u_L,
        "delta": delta,
        "gpe_param": gpe,
        "dnlse_param": delta / model.K,
    }


def interaction_tensor_dense(model: Model) -> np.ndarray:
    """``C[a, b, c, d] = L sum_j f_a* f_b* f_c f_d`` over the orbital columns."""
    F = model.orbital_matrix
    Fc = F.conj()
    C = model.L * np.einsum("ja,jb,jc,jd->abcd", Fc, Fc, F, F, optimize=True)
    C[np.abs(C) < TENSOR_CUTOFF] = 0
    if np.all(np.abs(C.imag) < TENSOR_CUTOFF):
        C = C.real.copy()
    return C


@dataclass(frozen=True)
class InteractionTensor:
    """Sparse table of the non-zero ``C[k'''', k''', k'', k']`` entries.

    ``index[:, 0..3]`` hold orbital positions in the order of the operator string
    ``b+_{a} b+_{b} b_{c} b_{d}``.
    """

    index: np.ndarray
    value: np.ndarray

    def __len__(self) -> int:
        return len(self.value)

    def as_dict(self) -> dict[tuple[int, int, int, int], complex | float]:
        return {tuple(int(i) for i in idx): v for idx, v in zip(self.index, self.value)}


def interaction_tensor(model: Model) -> InteractionTensor:
    C = interaction_tensor_dense(model)
    idx = np.argwhere(C != 0)
    return InteractionTensor(idx, C[tuple(idx.T)])
