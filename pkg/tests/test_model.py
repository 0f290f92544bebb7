import json
import math
from dataclasses import replace

import numpy as np
import pytest

from presto import density as dens
from presto.density import BinPartition
from presto.intervals import IntervalMethodConfig
from presto.model import (
    PrestoConfig,
    PrestoModel,
    PrestoRegressor,
    default_gbdt,
    presto_fit,
    presto_interval,
    presto_point_estimate,
    presto_predict,
)

FAST = replace(default_gbdt(), learning_rate=0.3, max_depth=2, max_trees=30)


def _config(m=5, **kw):
    return PrestoConfig(m=m, gbdt=replace(FAST, **kw.pop("gbdt", {})), **kw)


@pytest.fixture(scope="module")
def linear_data():
    r = np.random.default_rng(0)
    x = r.uniform(-2, 2, size=(400, 2))
    y = x[:, 0] + 0.3 * r.normal(size=400)
    return x, y


@pytest.fixture(scope="module")
def linear_model(linear_data):
    x, y = linear_data
    return presto_fit(x[:300], y[:300], x[300:], y[300:], _config(m=5, gbdt={"loss": "structured_ce"}))


def uniform_model():
    cfg = PrestoConfig(m=1, interval=IntervalMethodConfig(method="fixed", grid=(0.0, 10.0)))
    X = np.zeros((4, 1))
    return presto_fit(X, np.array([1.0, 3.0, 5.0, 9.0]), config=cfg)


def test_single_bin_model_is_uniform():
    model = uniform_model()
    d = presto_predict(model, np.zeros((2, 1)))[0]
    np.testing.assert_allclose(d.heights, [0.1])
    assert presto_point_estimate(model, np.zeros((1, 1)))[0] == pytest.approx(5.0)
    np.testing.assert_allclose(presto_interval(model, np.zeros((1, 1)), 0.5), [[2.5, 7.5]])


def test_single_forest_masses_equal_probabilities(linear_data):
    x, y = linear_data
    model = presto_fit(x, y, config=_config(m=1))
    d = presto_predict(model, x[:10])
    p = model.forests[0].predict_proba(x[:10])
    for di, pi in zip(d, p):
        np.testing.assert_allclose(di.masses, pi, atol=1e-12)


def test_predicted_densities_are_normalized(linear_model, linear_data):
    for d in presto_predict(linear_model, linear_data[0][:50]):
        assert abs(float(np.sum(d.masses)) - 1.0) < 1e-9


def test_training_targets_have_positive_density(linear_model, linear_data):
    x, y = linear_data
    ds = presto_predict(linear_model, x[:300])
    assert all(d.pdf(v) > 0 for d, v in zip(ds, y[:300]))


def test_classifier_order_invariance(linear_model, linear_data):
    x = linear_data[0][:30]
    perm = [3, 0, 4, 2, 1]
    shuffled = PrestoModel([linear_model.partitions[i] for i in perm],
                           [linear_model.forests[i] for i in perm], linear_model.config)
    for a, b in zip(presto_predict(linear_model, x), presto_predict(shuffled, x)):
        np.testing.assert_array_equal(a.edges, b.edges)
        np.testing.assert_allclose(a.heights, b.heights, atol=1e-12, rtol=0)


def test_interval_mass_and_nesting(linear_model, linear_data):
    x = linear_data[0][:40]
    ds = presto_predict(linear_model, x)
    wide = presto_interval(linear_model, x, 0.9)
    narrow = presto_interval(linear_model, x, 0.5)
    for d, (lo, hi), (nlo, nhi) in zip(ds, wide, narrow):
        assert d.cdf(hi) - d.cdf(lo) == pytest.approx(0.9, abs=1e-9)
        assert lo <= nlo <= nhi <= hi
    with pytest.raises(ValueError):
        presto_interval(linear_model, x, 1.0)


def test_point_estimate_beats_global_mean(linear_model, linear_data):
    x, y = linear_data
    est = presto_point_estimate(linear_model, x[300:])
    np.testing.assert_allclose(est, [d.mean() for d in presto_predict(linear_model, x[300:])], atol=1e-9)
    rmse = np.sqrt(np.mean((est - y[300:]) ** 2))
    assert rmse < np.sqrt(np.mean((y[:300].mean() - y[300:]) ** 2))


def test_fit_is_deterministic(linear_data):
    x, y = linear_data
    a = presto_fit(x, y, config=_config(m=3, seed=9))
    b = presto_fit(x, y, config=_config(m=3, seed=9))
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    q = np.linspace(-4, 4, 1000)
    for da, db in zip(presto_predict(a, x[:3]), presto_predict(b, x[:3])):
        np.testing.assert_array_equal(da.pdf(q), db.pdf(q))


def test_worker_count_does_not_change_result(linear_data):
    x, y = linear_data
    a = presto_fit(x, y, config=_config(m=3, seed=2))
    b = presto_fit(x, y, config=_config(m=3, seed=2, n_jobs=2))
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_serialization_round_trip(linear_model, linear_data):
    doc = json.loads(json.dumps(linear_model.to_dict()))
    back = PrestoModel.from_dict(doc)
    assert back.config == linear_model.config
    x = linear_data[0][:20]
    for a, b in zip(presto_predict(linear_model, x), presto_predict(back, x)):
        np.testing.assert_array_equal(a.heights, b.heights)


def test_fixed_round_counts_and_frozen_partitions(linear_model, linear_data):
    x, y = linear_data
    refit = presto_fit(x, y, config=linear_model.config, n_rounds=linear_model.n_rounds,
                       partitions=linear_model.partitions)
    assert refit.n_rounds == linear_model.n_rounds
    assert refit.partitions == linear_model.partitions
    redrawn = presto_fit(x, y, config=linear_model.config, n_rounds=linear_model.n_rounds)
    assert redrawn.partitions != linear_model.partitions


def test_classifier_errors_name_the_index():
    cfg = PrestoConfig(m=2, interval=IntervalMethodConfig(extend=False))
    with pytest.raises(ValueError, match="classifier 0"):
        presto_fit(np.zeros((5, 1)), np.full(5, 2.0), config=cfg)


def test_input_errors(linear_data):
    x, y = linear_data
    with pytest.raises(ValueError):
        presto_fit(x, y[:-1], config=_config(m=1))
    with pytest.raises(ValueError):
        presto_fit(x, np.where(np.arange(len(y)) == 3, np.nan, y), config=_config(m=1))
    with pytest.raises(ValueError):
        PrestoConfig(m=0)


def test_regressor_wrapper(linear_data):
    x, y = linear_data
    reg = PrestoRegressor(_config(m=2)).fit(x[:300], y[:300], x[300:], y[300:])
    assert reg.predict(x[:5]).shape == (5,)
    assert reg.predict_interval(x[:5], 0.8).shape == (5, 2)
    assert len(reg.predict_density(x[:5])) == 5


def test_more_classifiers_give_stabler_averages():
    r = np.random.default_rng(4)
    x = r.uniform(-1, 1, size=(300, 1))
    y = np.sin(3 * x[:, 0]) + 0.3 * r.normal(size=300)
    model = presto_fit(x, y, config=_config(m=100, gbdt={"max_trees": 20}))
    q = np.linspace(y.min(), y.max(), 200)
    row = np.array([[0.2]])

    def pdf(c):
        edges, H = model.predict_heights(row, members=range(c))
        return dens.PiecewiseConstantDensity(BinPartition(edges), H[0]).pdf(q)

    dist = [np.abs(pdf(m) - pdf(2 * m)).mean() for m in (5, 10, 25, 50)]
    assert all(a > b for a, b in zip(dist, dist[1:]))


def test_uninformative_normal_targets_match_gaussian_entropy():
    r = np.random.default_rng(11)
    n = 4000
    x = r.normal(size=(n, 2))
    y = r.normal(size=n)
    cfg = PrestoConfig(m=10, gbdt=replace(default_gbdt(), learning_rate=0.1, max_depth=2, max_trees=200),
                       seed=1)
    model = presto_fit(x[:2400], y[:2400], x[2400:3200], y[2400:3200], cfg)
    ds = presto_predict(model, x[3200:])
    nll = np.mean([dens.nll(d, v) for d, v in zip(ds, y[3200:])])
    assert abs(nll - 0.5 * math.log(2 * math.pi * math.e)) < 0.1
