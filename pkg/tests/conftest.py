import numpy as np
import pytest

from bhtomo.lattice import build_model

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LOG, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def chain5():
    return build_model("chain", 5, 20, u=1.0)


def site_basis_hamiltonian(L_s, N, K, U, ring, Phi=0.0):
    """Bose-Hubbard H in the site Fock basis, built independently by brute force."""
    import itertools

    states = [s for s in itertools.product(range(N + 1), repeat=L_s) if sum(s) == N]
    index = {s: i for i, s in enumerate(states)}
    H = np.zeros((len(states), len(states)), dtype=complex)
    bonds = [(j, j + 1) for j in range(L_s - 1)]
    if ring:
        bonds.append((L_s - 1, 0))
    phase = np.exp(1j * Phi / L_s)
    for s in states:
        i = index[s]
        H[i, i] += 0.5 * U * sum(n * (n - 1) for n in s)
        for a, b in bonds:
            # a+_b a_a carries the phase, its conjugate the inverse
            for src, dst, ph in ((a, b, phase), (b, a, np.conj(phase))):
                if s[src] == 0:
                    continue
                t = list(s)
                amp = np.sqrt(t[src])
                t[src] -= 1
                amp *= np.sqrt(t[dst] + 1)
                t[dst] += 1
                H[index[tuple(t)], i] += -0.5 * K * (ph if ring else 1.0) * amp
    return states, H
