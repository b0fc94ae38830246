import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bhtomo.lattice import (
    build_model,
    dimensionless_params,
    interaction_tensor,
    interaction_tensor_dense,
    orbital_energies,
    orbitals,
    wavenumbers,
)


def test_dimensionless_examples():
    m = build_model("chain", 5, 30, u=3.5)
    assert m.L == 6
    assert m.u_L == pytest.approx(21.0)
    m = build_model("chain", 3, 100, U=0.015)
    assert m.u == pytest.approx(1.5)
    assert m.delta == pytest.approx(0.375)
    assert build_model("ring", 5, 10).L == 5


def test_U_and_u_agree():
    a = build_model("chain", 5, 20, U=0.25)
    b = build_model("chain", 5, 20, u=5.0)
    assert a.U == pytest.approx(b.U)
    assert a.g == pytest.approx(5.0)


@pytest.mark.parametrize("kw", [
    dict(geometry="chain", L_s=1, N=2),
    dict(geometry="chain", L_s=3, N=0),
    dict(geometry="chain", L_s=3, N=2, K=0.0),
    dict(geometry="chain", L_s=3, N=2, U=-1.0),
    dict(geometry="chain", L_s=3, N=2, Phi=0.5),
    dict(geometry="chain", L_s=3, N=2, U=1.0, u=1.0),
    dict(geometry="torus", L_s=3, N=2),
])
def test_invalid_parameters(kw):
    with pytest.raises(ValueError):
        build_model(**kw)


def test_orbital_energies_chain_and_ring():
    eps = orbital_energies(build_model("chain", 5, 1))
    assert eps[0] == pytest.approx(-math.sqrt(3) / 2)
    assert eps[2] == pytest.approx(0.0, abs=1e-15)
    assert orbital_energies(build_model("ring", 5, 1))[0] == pytest.approx(-1.0)


def test_ring_flux_shifts_energies():
    m = build_model("ring", 5, 1, Phi=1.0)
    k = wavenumbers(m)
    assert np.allclose(orbital_energies(m), -np.cos(k - 1.0 / 5))


@pytest.mark.parametrize("geometry,L_s", [("chain", 4), ("chain", 7), ("ring", 5), ("ring", 6)])
def test_orbitals_unitary_and_diagonalize_hopping(geometry, L_s):
    m = build_model(geometry, L_s, 3, Phi=0.4 if geometry == "ring" else 0.0)
    F = m.orbital_matrix
    assert np.allclose(F.conj().T @ F, np.eye(L_s), atol=1e-13)
    assert np.allclose(F.conj().T @ m.hopping_matrix @ F, np.diag(m.orbital_energies), atol=1e-13)


def test_kinetic_energy_measured_from_floor():
    for orb in orbitals(build_model("chain", 5, 1, K=2.0)):
        assert orb.kinetic == pytest.approx(orb.energy + 2.0)


def test_flux_periodicity():
    a = build_model("ring", 5, 1, Phi=0.7)
    b = build_model("ring", 5, 1, Phi=0.7 + 2 * np.pi)
    assert np.allclose(np.sort(a.orbital_energies), np.sort(b.orbital_energies))
    # equal up to the gauge transformation G = diag(exp(2 pi i j / L))
    G = np.diag(np.exp(2j * np.pi * np.arange(1, 6) / 5))
    assert np.allclose(b.hopping_matrix, G @ a.hopping_matrix @ G.conj().T)


def _tensor_by_loops(model):
    F = model.orbital_matrix
    n = model.L_s
    C = np.zeros((n, n, n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                for d in range(n):
                    C[a, b, c, d] = model.L * sum(
                        np.conj(F[j, a] * F[j, b]) * F[j, c] * F[j, d] for j in range(n)
                    )
    return C


@pytest.mark.parametrize("geometry,L_s", [("chain", 4), ("chain", 5), ("ring", 4), ("ring", 5)])
def test_tensor_matches_explicit_sum(geometry, L_s):
    m = build_model(geometry, L_s, 2)
    assert np.allclose(interaction_tensor_dense(m), _tensor_by_loops(m), atol=1e-12)


def test_chain_tensor_values():
    C = interaction_tensor_dense(build_model("chain", 4, 2))
    assert np.allclose(np.diagonal(np.diagonal(np.diagonal(C))), 1.5)
    assert C[0, 1, 0, 1] == pytest.approx(1.0)
    assert C[0, 0, 1, 1] == pytest.approx(C[0, 1, 0, 1])


def test_ring_tensor_selection_rule():
    m = build_model("ring", 5, 2, Phi=0.3)
    C = interaction_tensor_dense(m)
    a, b, c, d = np.indices(C.shape)
    allowed = (a + b - c - d) % 5 == 0
    assert np.allclose(C[allowed], 1.0)
    assert np.all(C[~allowed] == 0)


@settings(max_examples=25, deadline=None)
@given(geometry=st.sampled_from(["ring", "chain"]), L_s=st.integers(2, 6))
def test_tensor_symmetries(geometry, L_s):
    C = interaction_tensor_dense(build_model(geometry, L_s, 1))
    assert np.allclose(C, C.transpose(1, 0, 2, 3))
    assert np.allclose(C, C.transpose(0, 1, 3, 2))
    # hermiticity of the interaction operator
    assert np.allclose(C, C.transpose(3, 2, 1, 0).conj())


def test_sparse_tensor_roundtrip():
    m = build_model("chain", 5, 2)
    T = interaction_tensor(m)
    dense = interaction_tensor_dense(m)
    assert len(T) == np.count_nonzero(dense)
    for key, val in T.as_dict().items():
        assert dense[key] == val


def test_dnlse_param():
    p = dimensionless_params(build_model("chain", 5, 30, u=3.5), 2)
    assert p["dnlse_param"] == pytest.approx(3.5 / 6)


def test_gpe_param_exact_and_asymptote():
    # exact lattice value Delta / E_k; small k gives 2 u_L / (pi^2 m_o^2) for a chain
    m = build_model("chain", 50, 20, u=0.01)
    p = dimensionless_params(m, 2)
    e_kin = 1 - math.cos(2 * math.pi / 51)
    assert p["gpe_param"] == pytest.approx((0.01 / 51) / e_kin, rel=1e-12)
    assert p["gpe_param"] == pytest.approx(2 * m.u_L / (math.pi**2 * 4), rel=0.05)


def test_gpe_param_ring_asymptote():
    m = build_model("ring", 60, 20, u=0.02)
    p = dimensionless_params(m, 3)
    assert p["gpe_param"] == pytest.approx(m.u_L / (2 * math.pi**2 * 9), rel=0.05)


def test_gpe_param_sentinels():
    assert dimensionless_params(build_model("ring", 5, 4, u=1.0), 0)["gpe_param"] == math.inf
    assert dimensionless_params(build_model("ring", 5, 4), 0)["gpe_param"] == 0.0


def test_with_helpers_keep_u():
    m = build_model("ring", 5, 20, u=2.0, Phi=0.5)
    assert m.with_N(40).u == pytest.approx(2.0)
    assert m.with_u(3.0).u == pytest.approx(3.0)
    assert m.with_phi(1.0).Phi == 1.0
