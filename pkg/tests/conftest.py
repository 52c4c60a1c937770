import numpy as np
import pytest

from flowlab.geometry import circle, lamella


@pytest.fixture(scope="session")
def disk():
    return circle(0.2, n=256)


@pytest.fixture(scope="session")
def stripe():
    return lamella(0.5, n=128)


@pytest.fixture(scope="session")
def bumpy():
    """Circle r=0.2 with a mild cos(3 theta) bump; not critical."""
    return circle(0.2, n=128, modes=[(3, 0.01)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def smooth_field(rng, kmax=2, scale=1.0):
    """Random periodic vector field sum_k a_k cos(2 pi k.x) + b_k sin(2 pi k.x) on T^2."""
    k = np.array([(a, b) for a in range(-kmax, kmax + 1) for b in range(0, kmax + 1) if (b > 0 or a >= 0)])
    ca = rng.normal(size=(len(k), 2)) * scale / (1 + (k**2).sum(axis=1))[:, None]
    cb = rng.normal(size=(len(k), 2)) * scale / (1 + (k**2).sum(axis=1))[:, None]

    def field(x):
        ph = 2 * np.pi * np.atleast_2d(x) @ k.T
        return np.cos(ph) @ ca + np.sin(ph) @ cb

    return field


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
