import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bhtomo.dynamics import (
    DriftError,
    ShellSamplingError,
    classical_one_body,
    classical_purity,
    classical_tomography,
    default_dt,
    dnlse_rhs,
    energy_per_particle,
    ergodicity_map,
    integrate,
    launch_state,
    lyapunov_exponent,
    random_states,
    sample_energy_shell,
    sample_phase_space,
    sp_and_sea_lyapunov,
    time_average_occupations,
)
from bhtomo.lattice import build_model
from bhtomo.stationary import continue_sp, sp_orbital_occupations


def kicked(psi, eps, seed):
    rng = np.random.default_rng(seed)
    out = psi + eps * (rng.normal(size=len(psi)) + 1j * rng.normal(size=len(psi)))
    return out / np.linalg.norm(out)


def test_rhs_at_sp_is_phase_rotation():
    m = build_model("chain", 5, 20, u=2.0)
    sp = continue_sp(m, 1)
    assert np.allclose(dnlse_rhs(m, sp.psi), -1j * sp.mu * sp.psi, atol=1e-12)


def test_rhs_for_free_orbital():
    m = build_model("ring", 5, 20, Phi=0.8)
    f = m.orbital_matrix[:, 2]
    assert np.allclose(dnlse_rhs(m, f), -1j * m.orbital_energies[2] * f)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), u=st.floats(0, 5), ring=st.booleans())
def test_rhs_is_wirtinger_gradient(seed, u, ring):
    m = build_model("ring" if ring else "chain", 4, 10, u=u, Phi=0.9 if ring else 0.0)
    psi = random_states(np.random.default_rng(seed), 1, 4)[0]
    h = 1e-6
    grad = np.empty(4, dtype=complex)
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        dx = (energy_per_particle(m, psi + e) - energy_per_particle(m, psi - e)) / (2 * h)
        dy = (energy_per_particle(m, psi + 1j * e) - energy_per_particle(m, psi - 1j * e)) / (2 * h)
        grad[j] = 0.5 * (dx + 1j * dy)
    assert np.allclose(dnlse_rhs(m, psi), -1j * grad, atol=1e-8)


def test_sp_is_stationary():
    m = build_model("chain", 7, 20, u=3.0)
    sp = continue_sp(m, 2)
    tr = integrate(m, sp.psi, 100.0)
    assert np.max(np.abs(np.abs(tr.psi_t) ** 2 - sp.density)) < 1e-8
    n = time_average_occupations(tr)
    frac, _ = sp_orbital_occupations(sp, m)
    assert np.allclose(n, 20 * frac, atol=1e-6)
    assert classical_purity(tr) == pytest.approx(1.0, abs=1e-8)


def test_noninteracting_occupations_constant():
    m = build_model("chain", 5, 20)
    psi0 = random_states(np.random.default_rng(3), 1, 5)[0]
    tr = integrate(m, psi0, 500.0)
    assert np.max(np.abs(tr.n_k_t - tr.n_k_t[0])) < 1e-8
    assert np.allclose(time_average_occupations(tr), tr.n_k_t[0], atol=1e-9)
    # phases average out, leaving the diagonal occupations
    assert classical_purity(tr) == pytest.approx(np.sum((tr.n_k_t[0] / 20) ** 2), abs=0.02)


def test_classical_one_body_properties():
    m = build_model("chain", 5, 20, u=3.5)
    tr = integrate(m, random_states(np.random.default_rng(5), 1, 5)[0], 300.0)
    rho = classical_one_body(tr)
    assert np.allclose(rho, rho.conj().T)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_drift_gates_over_default_duration():
    m = build_model("chain", 5, 20, u=3.5)
    tr = integrate(m, random_states(np.random.default_rng(0), 1, 5)[0])
    assert tr.times[-1] == pytest.approx(2500.0)
    assert tr.norm_drift < 1e-8 and tr.energy_drift < 1e-8


def test_large_step_raises_drift_error():
    m = build_model("chain", 5, 20, u=3.5)
    with pytest.raises(DriftError) as err:
        integrate(m, random_states(np.random.default_rng(0), 1, 5)[0], 200.0, dt=0.3)
    assert err.value.energy_drift > 1e-8


def test_time_reversal():
    m = build_model("chain", 5, 20, u=3.5)
    psi0 = random_states(np.random.default_rng(1), 1, 5)[0]
    # short enough that chaotic growth of roundoff stays small
    fwd = integrate(m, psi0, 20.0)
    back = integrate(m, fwd.psi_t[-1], 20.0, dt=-default_dt(m))
    assert np.linalg.norm(back.psi_t[-1] - psi0) < 1e-6


def test_rk4_agrees_with_splitting():
    m = build_model("chain", 3, 20, u=1.0)
    psi0 = random_states(np.random.default_rng(2), 1, 3)[0]
    a = integrate(m, psi0, 5.0, record_dt=1.0)
    b = integrate(m, psi0, 5.0, method="rk4", record_dt=1.0)
    assert np.allclose(a.psi_t[-1], b.psi_t[-1], atol=1e-8)


def test_sp_launch_escapes_past_threshold():
    m = build_model("chain", 5, 20, u=2.0)
    tr = integrate(m, kicked(continue_sp(m, 2).psi, 1e-3, 0), record_dt=1.0)
    assert tr.n_k_t[:, 1].min() / 20 < 0.8


def test_sp_launch_departs_just_past_threshold():
    # u = 1.5: the perturbation grows by orders of magnitude before turning back
    m = build_model("chain", 5, 20, u=1.5)
    tr = integrate(m, kicked(continue_sp(m, 2).psi, 1e-3, 0), record_dt=1.0)
    depletion = 1 - tr.n_k_t[:, 1] / 20
    assert depletion[0] < 1e-5
    assert depletion.max() > 0.05


@pytest.mark.xfail(reason="at u=1.5 the excursion from the SP is bounded near n_o/N = 0.93", strict=True)
def test_sp_launch_drops_below_08_at_u15():
    m = build_model("chain", 5, 20, u=1.5)
    tr = integrate(m, kicked(continue_sp(m, 2).psi, 1e-3, 0), record_dt=1.0)
    assert tr.n_k_t[:, 1].min() / 20 < 0.8


def test_same_energy_launches_agree_in_chaotic_regime():
    m = build_model("chain", 5, 20, u=3.5)
    sp = continue_sp(m, 2)
    p1 = kicked(sp.psi, 1e-6, 0)
    E1 = energy_per_particle(m, p1)
    # n_o = 0.5 launches with random weights and phases in the other orbitals
    rng = np.random.default_rng(7)
    c = np.sqrt(0.5 * rng.dirichlet(np.ones(4), size=20000)) * np.exp(2j * np.pi * rng.random((20000, 4)))
    coeff = np.insert(c, 1, np.sqrt(0.5), axis=1)
    cand = coeff @ m.orbital_matrix.T
    E = energy_per_particle(m, cand)
    p2 = cand[np.argmin(np.abs(E - E1))]
    assert abs(energy_per_particle(m, p2) - E1) < 1e-3
    a = time_average_occupations(integrate(m, p1, record_dt=1.0))[1]
    b = time_average_occupations(integrate(m, p2, record_dt=1.0))[1]
    assert a == pytest.approx(b, rel=0.1)


def test_ergodic_trajectory_has_several_orbitals():
    m = build_model("chain", 5, 20, u=3.5)
    tr = integrate(m, kicked(continue_sp(m, 2).psi, 1e-3, 0), record_dt=1.0)
    assert 1 / classical_purity(tr) > 2


def test_lyapunov_noninteracting_is_zero():
    m = build_model("chain", 5, 20)
    r = lyapunov_exponent(m, random_states(np.random.default_rng(0), 1, 5)[0], 1000.0)
    assert abs(r.gamma) < 2 / 1000
    assert r.times[-1] == pytest.approx(1000.0)
    assert not r.flagged


def test_lyapunov_near_stable_sp_is_zero():
    m = build_model("chain", 5, 20, u=0.5)
    r = lyapunov_exponent(m, kicked(continue_sp(m, 2).psi, 1e-3, 0), 2000.0)
    assert abs(r.gamma) < 2 / 2000


@pytest.mark.slow
def test_lyapunov_sp_and_sea_comparable():
    m = build_model("chain", 5, 20, u=3.5)
    g_sp, g_cs = sp_and_sea_lyapunov(m, 2, 2000.0)
    ratio = g_sp.gamma / np.mean([g.gamma for g in g_cs])
    assert 1 / 1.5 <= ratio <= 1.5


def test_shell_samples_in_window_and_reproducible():
    m = build_model("chain", 5, 20, u=3.5)
    a = sample_energy_shell(m, 0.1, 0.01, 20, rng_seed=4)
    b = sample_energy_shell(m, 0.1, 0.01, 20, rng_seed=4)
    assert all(abs(s.E - 0.1) < 0.01 for s in a)
    assert all(np.array_equal(x.psi0, y.psi0) for x, y in zip(a, b))
    assert all(np.linalg.norm(s.psi0) == pytest.approx(1.0) for s in a)
    assert a[0].provenance["window"] == 0.01


def test_shell_below_ground_energy_fails():
    m = build_model("chain", 5, 20, u=3.5)
    with pytest.raises(ShellSamplingError):
        sample_energy_shell(m, -5.0, 0.01, 5, batch=2000)
    with pytest.raises(ValueError):
        sample_energy_shell(m, 0.0, 0.0, 5)


def test_phase_space_samples_cover_energy_range():
    m = build_model("chain", 5, 20, u=3.5)
    s = sample_phase_space(m, 2000, rng_seed=1)
    E = np.array([x.E for x in s])
    assert E.min() > -1.0 and E.max() < 1.0 + m.g
    assert E.std() > 0.1


def test_launch_state_fraction():
    m = build_model("chain", 51, 20, u=5.0)
    sp = continue_sp(m, 2)
    psi = launch_state(m, 2, 0.45, np.random.default_rng(0), sp)
    frac = np.abs(m.orbital_matrix.conj().T @ psi) ** 2
    assert frac[1] == pytest.approx(0.45)
    assert frac.sum() == pytest.approx(1.0)
    # remaining weight follows the SP profile
    sp_frac, _ = sp_orbital_occupations(sp, m)
    rest = np.delete(frac, 1)
    assert np.allclose(rest / rest.sum(), np.delete(sp_frac, 1) / np.delete(sp_frac, 1).sum())


def test_ergodicity_maps():
    grid = [0.2, 0.5, 0.8]
    _, regular = ergodicity_map(build_model("chain", 5, 20, u=0.5), 2, grid, T=500.0, seeds=3)
    # regular motion keeps the memory of the launch fraction
    assert np.all(np.diff(regular) > 0.15)
    assert regular[0] == pytest.approx(0.2, abs=0.05) and regular[2] == pytest.approx(0.8, abs=0.05)
    _, chaotic = ergodicity_map(build_model("chain", 5, 20, u=3.5), 2, grid, T=500.0, seeds=3)
    assert np.ptp(chaotic) < 0.1


def test_ergodicity_map_island_at_strong_interaction():
    _, out = ergodicity_map(build_model("chain", 5, 20, u=7.5), 2, [0.9, 0.99], T=1000.0, seeds=4)
    assert out[0] < 0.4 and out[1] > 0.5


def test_classical_tomography_noninteracting():
    m = build_model("chain", 4, 10)
    samples = sample_phase_space(m, 5, rng_seed=0)
    rows = classical_tomography(m, samples, 2, T=100.0)
    n0 = [10 * abs(m.orbital_matrix[:, 1] @ s.psi0) ** 2 for s in samples]
    assert np.allclose(rows[:, 1], n0, atol=1e-9)
    assert np.allclose(rows[:, 0], [10 * s.E for s in samples])
    assert np.all(rows[:, 3] < 1e-8) and np.all(rows[:, 4] < 1e-8)


def test_classical_tomography_parallel_matches_serial():
    m = build_model("chain", 3, 10, u=1.0)
    samples = sample_phase_space(m, 4, rng_seed=2)
    a = classical_tomography(m, samples, 2, T=50.0)
    b = classical_tomography(m, samples, 2, T=50.0, workers=2)
    assert np.array_equal(a, b)


def test_ring_ergodic_band_has_narrow_dispersion():
    m = build_model("ring", 5, 20, u=4.0, Phi=2.7 * np.pi)
    samples = sample_energy_shell(m, 0.8, 0.02, 6, rng_seed=3)
    rows = classical_tomography(m, samples, 0, T=1000.0)
    assert np.std(rows[:, 1] / 20) < 0.05
