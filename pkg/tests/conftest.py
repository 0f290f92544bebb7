import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from presto.density import BinPartition, make_density

settings.register_profile(
    "repo", derandomize=True, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@st.composite
def partitions(draw, min_bins=1, max_bins=12):
    k = draw(st.integers(min_bins, max_bins))
    start = draw(st.floats(-100, 100))
    widths = draw(st.lists(st.floats(0.01, 10), min_size=k, max_size=k))
    return BinPartition(start + np.concatenate([[0.0], np.cumsum(widths)]))


@st.composite
def densities(draw, min_bins=1, max_bins=12):
    part = draw(partitions(min_bins, max_bins))
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=part.n_bins, max_size=part.n_bins)))
    if w.sum() == 0:
        w[0] = 1.0
    return make_density(w / w.sum(), part)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_density(rng, k=None, lo=None):
    """A random density with strictly positive bin masses."""
    k = k or int(rng.integers(1, 15))
    lo = rng.uniform(-50, 50) if lo is None else lo
    edges = lo + np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 5, k))])
    p = rng.dirichlet(np.ones(k))
    return make_density(p, BinPartition(edges))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
