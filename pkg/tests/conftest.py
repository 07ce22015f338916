import numpy as np
import pytest

from pushmatch.measure import ForwardMap, make_measure


def random_measure(rng, k, dim=1, scale=1.0):
    pts = rng.uniform(-scale, scale, size=(k, dim))
    return make_measure(pts, rng.dirichlet(np.ones(k)))


def random_instance(rng, max_theta=10, max_support=12, dim=1):
    """Random tabulated map plus a data measure with mass on and off the range."""
    n_theta = int(rng.integers(1, max_theta + 1))
    thetas = rng.uniform(-1, 1, size=(n_theta, 1))
    pool = rng.uniform(-1, 1, size=(int(rng.integers(1, 6)), dim))
    fmap = ForwardMap(thetas, pool[rng.integers(len(pool), size=n_theta)])
    R = fmap.range_points
    n_out = int(rng.integers(1, max_support - len(R) + 1))
    out = R[rng.integers(len(R), size=n_out)] + rng.uniform(0.1, 1.0, size=(n_out, dim))
    nu1 = rng.uniform(0.3, 0.9)
    w = np.concatenate([
        nu1 * (0.9 * rng.dirichlet(np.ones(len(R))) + 0.1 / len(R)),
        (1 - nu1) * rng.dirichlet(np.ones(n_out)),
    ])
    return fmap, make_measure(np.vstack([R, out]), w)


@pytest.fixture
def canonical():
    """Identity on {0, 1} with rho_y = (0: 0.3, 1: 0.3, 2: 0.4); nu1 = 0.6."""
    fmap = ForwardMap([[0.0], [1.0]], [[0.0], [1.0]])
    return fmap, make_measure([0, 1, 2], [0.3, 0.3, 0.4])


@pytest.fixture
def square_map():
    """G(theta) = theta^2 on {-1, 0, 1}."""
    return ForwardMap.tabulate([-1.0, 0.0, 1.0], lambda t: t**2)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
