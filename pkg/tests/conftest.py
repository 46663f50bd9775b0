import numpy as np
import pytest


def random_state(rng, d=3, rank=None):
    """Random density matrix of the given rank (full by default)."""
    rank = d if rank is None else rank
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, d=3):
    Z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def phase_distance(U, V):
    """``min_phi ||U - e^{i phi} V||_max``."""
    ov = np.vdot(V.ravel(), U.ravel())
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.abs(U - ph * V).max())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
