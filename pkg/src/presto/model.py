"""PRESTO: average the densities of many coarse classifiers.

Each classifier sees the target cut into a freshly drawn set of bins,
learns class probabilities with a boosted forest, and turns them into a
piecewise-constant density.  The model's prediction is the pointwise mean
of those densities.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import density as dens
from .density import BinPartition, PiecewiseConstantDensity
from .gbdt import BoostedForest, GbdtConfig, fit as fit_forest
from .intervals import IntervalMethodConfig, discretize, draw_partition

logger = logging.getLogger(__name__)

MODEL_FORMAT = "presto-model"
MODEL_VERSION = 1


def default_gbdt() -> GbdtConfig:
    return GbdtConfig(prior_pseudocount=1.0)


@dataclass(frozen=True)
class PrestoConfig:
    m: int = 10
    interval: IntervalMethodConfig = field(default_factory=IntervalMethodConfig)
    gbdt: GbdtConfig = field(default_factory=default_gbdt)
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("n_jobs")
        for key in ("extend_params", "grid"):
            if d["interval"][key] is not None:
                d["interval"][key] = list(d["interval"][key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PrestoConfig":
        d = dict(d)
        interval = IntervalMethodConfig(**d.pop("interval", {}))
        gbdt = GbdtConfig(**{**asdict(default_gbdt()), **d.pop("gbdt", {})})
        return cls(interval=interval, gbdt=gbdt, **d)


@dataclass
class PrestoModel:
    partitions: List[BinPartition]
    forests: List[BoostedForest]
    config: PrestoConfig

    def __post_init__(self):
        for i, (b, f) in enumerate(zip(self.partitions, self.forests)):
            if b.n_bins != f.num_classes:
                raise ValueError(f"classifier {i}: {b.n_bins} bins but {f.num_classes} classes")

    @property
    def m(self) -> int:
        return len(self.forests)

    @property
    def n_rounds(self) -> List[int]:
        return [f.n_rounds for f in self.forests]

    def predict_heights(self, X, members: Optional[Sequence[int]] = None):
        """Averaged densities as a shared edge grid and an (n, bins) height matrix."""
        members = range(self.m) if members is None else members
        parts = [self.partitions[i] for i in members]
        heights = [self.forests[i].predict_proba(X) / self.partitions[i].widths for i in members]
        return dens.average_heights(parts, heights)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "partitions": [b.edges.tolist() for b in self.partitions],
            "forests": [f.to_dict() for f in self.forests],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrestoModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} document")
        return cls(
            partitions=[BinPartition(e) for e in d["partitions"]],
            forests=[BoostedForest.from_dict(f) for f in d["forests"]],
            config=PrestoConfig.from_dict(d["config"]),
        )


def _single_bin_forest(n_features: int) -> BoostedForest:
    empty_i = np.empty(0, dtype=np.int64)
    return BoostedForest(
        n_features, np.zeros(1), empty_i, np.empty(0), np.empty(0, dtype=np.bool_),
        empty_i, empty_i, np.empty(0), empty_i, empty_i, 0,
    )


def _labels(y, partition: BinPartition, clip: bool) -> np.ndarray:
    if not clip:
        return discretize(y, partition)
    y = np.clip(np.asarray(y, dtype=float), partition.edges[0], partition.edges[-1])
    return discretize(y, partition)


def _draw(i, y_train, config: PrestoConfig, partition: Optional[BinPartition]):
    """Classifier ``i``'s partition and forest seed, from its own rng stream."""
    rng = np.random.default_rng([config.seed, i])
    try:
        drawn = draw_partition(config.interval, y_train, rng)
    except ValueError as e:
        raise ValueError(f"classifier {i}: {e}") from e
    seed = int(rng.integers(2**31 - 1))
    return (drawn, False) if partition is None else (partition, True), seed


def _fit_one(i, X_train, y_train, X_valid, y_valid, config: PrestoConfig,
             n_rounds: Optional[int], partition: BinPartition, clip: bool, seed: int):
    try:
        y_lab = _labels(y_train, partition, clip=clip)
        if partition.n_bins == 1:
            return _single_bin_forest(X_train.shape[1])
        gcfg = replace(config.gbdt, num_classes=partition.n_bins, seed=seed)
        if n_rounds is not None:
            gcfg = replace(gcfg, max_trees=max(n_rounds, 1), early_stopping_rounds=None)
        yv = None
        if X_valid is not None and len(X_valid):
            # validation targets beyond the outer edges count toward the end bins
            yv = _labels(y_valid, partition, clip=True)
        forest = fit_forest(X_train, y_lab, X_valid, yv, gcfg)
        if n_rounds is not None:
            forest = forest.truncated(n_rounds)
        return forest
    except ValueError as e:
        raise ValueError(f"classifier {i}: {e}") from e


def presto_fit(X_train, y_train, X_valid=None, y_valid=None, config: PrestoConfig = PrestoConfig(),
               n_rounds: Optional[Sequence[int]] = None,
               partitions: Optional[Sequence[BinPartition]] = None) -> PrestoModel:
    """Fit ``config.m`` coarse classifiers and bundle them as a model.

    ``n_rounds`` fixes each forest's boosting rounds (no early stopping);
    ``partitions`` reuses given bin partitions instead of drawing new ones.
    Without column sampling the forest seed is unused, so classifiers that
    share a partition and round count share one fitted forest.
    """
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    if X_train.ndim != 2 or X_train.shape[0] != y_train.shape[0]:
        raise ValueError(f"X has shape {X_train.shape} but y has {y_train.shape[0]} rows")
    if not np.all(np.isfinite(y_train)):
        raise ValueError("training targets must be finite")
    if X_valid is not None:
        X_valid = np.asarray(X_valid, dtype=float)
        y_valid = np.asarray(y_valid, dtype=float)
    m = config.m
    for name, seq in (("n_rounds", n_rounds), ("partitions", partitions)):
        if seq is not None and len(seq) != m:
            raise ValueError(f"{name} has {len(seq)} entries for m={m}")

    draws = [_draw(i, y_train, config, None if partitions is None else partitions[i]) for i in range(m)]
    seed_free = config.gbdt.colsample_per_node >= 1.0
    tasks, owner = {}, []
    for i, ((part, clip), seed) in enumerate(draws):
        rounds = None if n_rounds is None else int(n_rounds[i])
        key = (part, clip, rounds) if seed_free else i
        if key not in tasks:
            tasks[key] = (i, part, clip, rounds, seed)
        owner.append(key)
    jobs = [delayed(_fit_one)(i, X_train, y_train, X_valid, y_valid, config, rounds, part, clip, seed)
            for i, part, clip, rounds, seed in tasks.values()]
    if config.n_jobs == 1:
        fitted = [fn(*a, **kw) for fn, a, kw in jobs]
    else:
        fitted = Parallel(n_jobs=config.n_jobs)(jobs)
    by_key = dict(zip(tasks, fitted))
    forests = [by_key[k] for k in owner]
    parts = [p for (p, _), _ in draws]
    logger.info("fitted %d forests (%d distinct); rounds %s", m, len(tasks), [f.n_rounds for f in forests])
    return PrestoModel(parts, forests, config)


def presto_predict(model: PrestoModel, X) -> List[PiecewiseConstantDensity]:
    edges, H = model.predict_heights(X)
    part = BinPartition(edges)
    return [PiecewiseConstantDensity(part, h) for h in H]


def presto_point_estimate(model: PrestoModel, X) -> np.ndarray:
    edges, H = model.predict_heights(X)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return H @ (np.diff(edges) * mids)


def presto_interval(model: PrestoModel, X, coverage: float) -> np.ndarray:
    """Central ``coverage`` intervals as an (n, 2) array of (lo, hi)."""
    if not 0 < coverage < 1:
        raise ValueError(f"coverage must lie in (0, 1), got {coverage}")
    alpha = 1.0 - coverage
    return np.array([d.quantile([alpha / 2, 1 - alpha / 2]) for d in presto_predict(model, X)])


class PrestoRegressor:
    """``fit``/``predict`` wrapper around :func:`presto_fit`."""

    def __init__(self, config: PrestoConfig = PrestoConfig()):
        self.config = config
        self.model_: Optional[PrestoModel] = None

    def fit(self, X, y, X_valid=None, y_valid=None):
        self.model_ = presto_fit(X, y, X_valid, y_valid, self.config)
        return self

    def predict_density(self, X) -> List[PiecewiseConstantDensity]:
        return presto_predict(self.model_, X)

    def predict(self, X) -> np.ndarray:
        return presto_point_estimate(self.model_, X)

    def predict_interval(self, X, coverage: float = 0.9) -> np.ndarray:
        return presto_interval(self.model_, X, coverage)
