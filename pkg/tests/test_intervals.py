import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from presto.density import BinPartition
from presto.intervals import (
    IntervalMethodConfig,
    discretize,
    draw_partition,
    fixed_edges,
    fixed_rss_edges,
    rand_quantile_edges,
)

Y = np.arange(11.0)


def test_hand_trace_single_level():
    # quantile(0.5) of 0..10 is 5; cuts at min, midpoints, max
    part = rand_quantile_edges(Y, r=1, z=[0.5])
    np.testing.assert_array_equal(part.edges, [0.0, 2.5, 7.5, 10.0])


def test_hand_trace_with_extend():
    # IQR 7.5 - 2.5 = 5, so one extra bin of width 5 on each side
    part = rand_quantile_edges(Y, r=1, extend=True, extend_params=(0.25, 0.75, 1.0), z=[0.5])
    np.testing.assert_array_equal(part.edges, [-5.0, 0.0, 2.5, 7.5, 10.0, 15.0])


def test_type7_quantile_rule():
    y = np.array([1.0, 2.0, 4.0, 8.0])
    # h = (n-1) q = 1.5 -> halfway between 2 and 4
    part = rand_quantile_edges(y, r=1, z=[0.5])
    np.testing.assert_allclose(part.edges, [1.0, 2.0, 5.5, 8.0])


def test_duplicate_cuts_collapse():
    y = np.array([0.0, 0.0, 0.0, 1.0])
    part = rand_quantile_edges(y, r=5, z=[0.1, 0.2, 0.3, 0.4, 0.5])
    assert np.all(np.diff(part.edges) > 0)
    assert part.edges[0] == 0.0 and part.edges[-1] == 1.0


def test_constant_targets():
    with pytest.raises(ValueError, match="equal"):
        rand_quantile_edges(np.full(5, 3.0), r=4, z=np.linspace(0.1, 0.9, 4))
    # extend with zero spread adds nothing either
    with pytest.raises(ValueError):
        rand_quantile_edges(np.full(5, 3.0), r=4, extend=True, z=np.linspace(0.1, 0.9, 4))


def test_input_errors():
    with pytest.raises(ValueError):
        rand_quantile_edges([], r=3, z=[0.5])
    with pytest.raises(ValueError):
        rand_quantile_edges(Y, r=0, z=[])
    with pytest.raises(ValueError):
        rand_quantile_edges(Y, r=3)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60),
       st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_rand_quantile_covers_training_targets(y, r, seed):
    y = np.array(y)
    if np.ptp(y) == 0:
        return
    part = rand_quantile_edges(y, r, extend=True, rng=np.random.default_rng(seed))
    # r quantiles plus min and max give r + 2 bins; extend adds two more
    assert part.n_bins <= r + 4
    if np.ptp(np.quantile(y, [0.25, 0.75])) > 0:
        assert part.edges[0] < y.min() and part.edges[-1] > y.max()
    labels = discretize(y, part)
    assert labels.min() >= 0 and labels.max() < part.n_bins


def test_fixed_and_rss():
    grid = (0.0, 0.5, 1.5, 2.5, 3.5, 4.0)
    np.testing.assert_array_equal(fixed_edges(grid).edges, grid)
    rng = np.random.default_rng(0)
    for size in range(5):
        part = fixed_rss_edges(grid, size, rng)
        assert part.n_bins == size + 1
        assert part.edges[0] == 0.0 and part.edges[-1] == 4.0
        assert set(part.edges[1:-1]) <= set(grid[1:-1])
    with pytest.raises(ValueError):
        fixed_rss_edges(grid, 5, rng)
    with pytest.raises(ValueError):
        fixed_edges([1.0, 1.0])


def test_config_validation():
    with pytest.raises(ValueError):
        IntervalMethodConfig(method="nope")
    with pytest.raises(ValueError):
        IntervalMethodConfig(method="fixed")
    with pytest.raises(ValueError):
        IntervalMethodConfig(method="fixed_rss", grid=(0, 1, 2))
    with pytest.raises(ValueError):
        IntervalMethodConfig(extend_params=(0.75, 0.25, 0.25))
    cfg = IntervalMethodConfig(method="fixed_rss", grid=[0, 1, 2, 3], subset_size=1)
    assert cfg.grid == (0.0, 1.0, 2.0, 3.0)


def test_draw_partition_is_seeded():
    cfg = IntervalMethodConfig()
    y = np.random.default_rng(1).normal(size=100)
    a = draw_partition(cfg, y, np.random.default_rng(7))
    b = draw_partition(cfg, y, np.random.default_rng(7))
    assert a == b


def test_discretize():
    part = BinPartition([0.0, 1.0, 2.0, 3.0])
    np.testing.assert_array_equal(discretize([0.0, 0.5, 1.0, 2.999, 3.0], part), [0, 0, 1, 2, 2])
    with pytest.raises(ValueError, match="3.5"):
        discretize([1.0, 3.5], part)
    with pytest.raises(ValueError):
        discretize([-0.1], part)
