"""Multi-class gradient boosted trees with a pluggable (structured) cross-entropy.

One regression tree per class per round, Newton leaf values
``-lr * G / (max(H, floor) + lambda)`` and optional early stopping on a
validation fold.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import _tree
from .structured_loss import (
    WeightedPartitionSet,
    cross_entropy_rows,
    default_block_size,
    grad_hess_by_class,
    softmax,
    standard_ordinal_partition,
)

logger = logging.getLogger(__name__)

FOREST_FORMAT = "presto-forest"
FOREST_VERSION = 1
LOSSES = ("standard_ce", "structured_ce")


@dataclass(frozen=True)
class GbdtConfig:
    num_classes: int = 2
    learning_rate: float = 0.1
    max_depth: int = 3
    max_trees: int = 1000
    early_stopping_rounds: Optional[int] = 25
    min_samples_leaf: int = 5
    colsample_per_node: float = 1.0
    loss: str = "standard_ce"
    w0: float = 0.1
    block_size: Optional[int] = None
    reg_lambda: float = 1.0
    hess_floor: float = 1e-6
    min_split_gain: float = 0.0
    max_bins: int = _tree.MAX_BINS
    # >0 smooths the starting log-priors and lets classes go unobserved
    prior_pseudocount: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_depth < 1 or self.max_trees < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_depth, max_trees and min_samples_leaf must be >= 1")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValueError("early_stopping_rounds must be >= 1 or None")
        if not 0 < self.colsample_per_node <= 1:
            raise ValueError("colsample_per_node must lie in (0, 1]")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if not 2 <= self.max_bins <= _tree.MAX_BINS:
            raise ValueError(f"max_bins must lie in [2, {_tree.MAX_BINS}]")
        if self.prior_pseudocount < 0:
            raise ValueError("prior_pseudocount must be >= 0")

    def partition_set(self) -> Optional[WeightedPartitionSet]:
        """Partitions for the structured loss; None when it is plain cross-entropy.

        ``block_size=1`` only adds singleton partitions, so the loss equals
        the standard one and takes the same code path (bit-identical fits).
        """
        if self.loss != "structured_ce":
            return None
        s = self.block_size or default_block_size(self.num_classes)
        if s == 1:
            return None
        return standard_ordinal_partition(self.num_classes, self.w0, s)


@dataclass
class BoostedForest:
    """Trained ensemble; trees are stored as flat node arrays.

    Tree ``t`` starts at node ``roots[t]`` and adds its leaf value to the
    score of class ``tree_class[t]``.
    """

    n_features: int
    base_scores: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray
    tree_class: np.ndarray
    n_rounds: int
    valid_history: Optional[list] = None
    train_history: Optional[list] = None

    @property
    def num_classes(self) -> int:
        return self.base_scores.size

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def predict_raw(self, X) -> np.ndarray:
        X = self._check(X)
        return _tree.predict_raw(X, self.feature, self.threshold, self.default_left,
                                 self.left, self.right, self.value,
                                 self.roots, self.tree_class, self.base_scores)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.predict_raw(X))

    def truncated(self, n_rounds: int) -> "BoostedForest":
        """The same forest keeping only the first ``n_rounds`` rounds."""
        n_rounds = min(n_rounds, self.n_rounds)
        n_trees = n_rounds * self.num_classes
        end = self.roots[n_trees] if n_trees < self.roots.size else self.feature.size
        return BoostedForest(
            self.n_features, self.base_scores,
            self.feature[:end], self.threshold[:end], self.default_left[:end],
            self.left[:end], self.right[:end], self.value[:end],
            self.roots[:n_trees], self.tree_class[:n_trees], n_rounds,
        )

    def to_dict(self) -> dict:
        def node(i):
            if self.feature[i] < 0:
                return {"leaf": float(self.value[i])}
            return {
                "feature": int(self.feature[i]),
                "threshold": float(self.threshold[i]),
                "default_left": bool(self.default_left[i]),
                "left": node(self.left[i]),
                "right": node(self.right[i]),
            }

        return {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "n_features": self.n_features,
            "num_classes": self.num_classes,
            "n_rounds": self.n_rounds,
            "base_scores": self.base_scores.tolist(),
            "trees": [{"class": int(c), "root": node(r)}
                      for c, r in zip(self.tree_class, self.roots)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedForest":
        if d.get("format") != FOREST_FORMAT or d.get("version") != FOREST_VERSION:
            raise ValueError(f"not a {FOREST_FORMAT} v{FOREST_VERSION} document")
        cols = {k: [] for k in ("feature", "threshold", "default_left", "left", "right", "value")}

        def add(nd):
            i = len(cols["feature"])
            for v in cols.values():
                v.append(0)
            if "leaf" in nd:
                cols["feature"][i], cols["value"][i] = -1, nd["leaf"]
                cols["left"][i] = cols["right"][i] = -1
                cols["threshold"][i], cols["default_left"][i] = 0.0, False
                return i
            cols["feature"][i] = nd["feature"]
            cols["threshold"][i] = nd["threshold"]
            cols["default_left"][i] = nd["default_left"]
            cols["value"][i] = 0.0
            cols["left"][i] = add(nd["left"])
            cols["right"][i] = add(nd["right"])
            return i

        roots, classes = [], []
        for t in d["trees"]:
            roots.append(add(t["root"]))
            classes.append(t["class"])
        return cls(
            n_features=int(d["n_features"]),
            base_scores=np.asarray(d["base_scores"], dtype=float),
            feature=np.asarray(cols["feature"], dtype=np.int64),
            threshold=np.asarray(cols["threshold"], dtype=float),
            default_left=np.asarray(cols["default_left"], dtype=np.bool_),
            left=np.asarray(cols["left"], dtype=np.int64),
            right=np.asarray(cols["right"], dtype=np.int64),
            value=np.asarray(cols["value"], dtype=float),
            roots=np.asarray(roots, dtype=np.int64),
            tree_class=np.asarray(classes, dtype=np.int64),
            n_rounds=int(d["n_rounds"]),
        )


def _check_inputs(X, y, k, what):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"{what}: X has shape {X.shape} but y has {y.shape[0]} rows")
    if np.any(np.isinf(X)):
        raise ValueError(f"{what}: features must be finite or NaN")
    if y.size and (y.min() < 0 or y.max() >= k or not np.issubdtype(y.dtype, np.integer)):
        raise ValueError(f"{what}: labels must be integers in [0, {k})")
    return X, y.astype(np.int64)


def base_scores(y: np.ndarray, k: int, pseudocount: float) -> np.ndarray:
    counts = np.bincount(y, minlength=k).astype(float)
    if pseudocount == 0 and np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"classes {missing} never occur in the training labels")
    return np.log((counts + pseudocount) / (counts.sum() + k * pseudocount))


def fit(X_train, y_train, X_valid=None, y_valid=None, config: GbdtConfig = GbdtConfig(),
        record_history: bool = False) -> BoostedForest:
    """Fit a boosted forest; with a validation fold, keep the best round."""
    k = config.num_classes
    X, y = _check_inputs(X_train, y_train, k, "train")
    has_valid = X_valid is not None and len(X_valid) > 0
    if has_valid:
        Xv, yv = _check_inputs(X_valid, y_valid, k, "valid")
        if Xv.shape[1] != X.shape[1]:
            raise ValueError("train and valid feature counts differ")
    else:
        Xv, yv = np.empty((0, X.shape[1])), np.empty(0, dtype=np.int64)

    n, F = X.shape
    # singleton-only partitions reduce the kernel to plain softmax cross-entropy
    wps = config.partition_set() or WeightedPartitionSet.singletons(k)
    thresholds = [_tree.feature_thresholds(X[:, f], config.max_bins) for f in range(F)]
    n_bins = np.array([t.size + 1 for t in thresholds], dtype=np.int64)
    Xb = _tree.bin_features(X, thresholds)
    offsets, slots = _tree.hist_layout(Xb, n_bins)
    Xvb = _tree.bin_features(Xv, thresholds)

    base = base_scores(y, k, config.prior_pseudocount)
    S = np.tile(base, (n, 1))
    Sv = np.tile(base, (Xv.shape[0], 1))

    max_nodes = 2 ** (config.max_depth + 1) - 1
    n_feat_sample = max(1, int(math.ceil(config.colsample_per_node * F)))
    rng = np.random.default_rng(config.seed)
    no_keys = np.zeros((k, max_nodes, 1))
    hist = np.empty((max_nodes, int(offsets[-1] + n_bins[-1] + 1), 3))

    rounds = []
    valid_hist = [float(cross_entropy_rows(Sv, yv).mean())] if has_valid else []
    train_hist = [float(cross_entropy_rows(S, y).mean())] if record_history else []
    best_loss = valid_hist[0] if has_valid else math.inf
    best_round = 0
    patience = config.early_stopping_rounds if has_valid else None

    for t in range(config.max_trees):
        g, h = grad_hess_by_class(S, y, wps)
        keys = rng.random((k, max_nodes, F)) if n_feat_sample < F else no_keys
        out = (np.empty((k, max_nodes), dtype=np.int64), np.empty((k, max_nodes), dtype=np.int64),
               np.empty((k, max_nodes), dtype=np.bool_), np.empty((k, max_nodes), dtype=np.int64),
               np.empty((k, max_nodes), dtype=np.int64), np.empty((k, max_nodes)),
               np.empty(k, dtype=np.int64))
        _tree.grow_round(Xb, slots, offsets, Xvb, n_bins, g, h, S, Sv,
                         config.max_depth, config.min_samples_leaf, config.reg_lambda,
                         config.hess_floor, config.learning_rate, config.min_split_gain,
                         keys, n_feat_sample, hist, *out)
        used = int(out[-1].max())
        rounds.append(tuple(a[:, :used].copy() for a in out[:-1]) + (out[-1],))
        if record_history:
            train_hist.append(float(cross_entropy_rows(S, y).mean()))
        if has_valid:
            vl = float(cross_entropy_rows(Sv, yv).mean())
            valid_hist.append(vl)
            if vl < best_loss:
                best_loss, best_round = vl, t + 1
            elif patience is not None and t + 1 - best_round >= patience:
                break
        else:
            best_round = t + 1

    if patience is None:
        best_round = len(rounds)
    forest = _assemble(rounds[:best_round], thresholds, base, F)
    forest.valid_history = valid_hist if has_valid else None
    forest.train_history = train_hist if record_history else None
    logger.debug("fit %d classes: kept %d of %d rounds", k, best_round, len(rounds))
    return forest


def _assemble(rounds, thresholds, base, F) -> BoostedForest:
    cols = {k: [] for k in ("feature", "threshold", "default_left", "left", "right", "value")}
    roots, classes = [], []
    offset = 0
    for feat, bins, dl, lt, rt, val, nn in rounds:
        for c in range(feat.shape[0]):
            m = nn[c]
            f = feat[c, :m]
            thr = np.array([thresholds[fi][b] if fi >= 0 else 0.0
                            for fi, b in zip(f, bins[c, :m])])
            internal = f >= 0
            cols["feature"].append(f)
            cols["threshold"].append(thr)
            cols["default_left"].append(dl[c, :m])
            cols["left"].append(np.where(internal, lt[c, :m] + offset, -1))
            cols["right"].append(np.where(internal, rt[c, :m] + offset, -1))
            cols["value"].append(val[c, :m])
            roots.append(offset)
            classes.append(c)
            offset += m

    def cat(key, dtype):
        parts = cols[key]
        return np.concatenate(parts).astype(dtype) if parts else np.empty(0, dtype=dtype)

    return BoostedForest(
        n_features=F,
        base_scores=base,
        feature=cat("feature", np.int64),
        threshold=cat("threshold", float),
        default_left=cat("default_left", np.bool_),
        left=cat("left", np.int64),
        right=cat("right", np.int64),
        value=cat("value", float),
        roots=np.asarray(roots, dtype=np.int64),
        tree_class=np.asarray(classes, dtype=np.int64),
        n_rounds=len(rounds),
    )


def predict_proba(forest: BoostedForest, X) -> np.ndarray:
    return forest.predict_proba(X)


def config_dict(config: GbdtConfig) -> dict:
    return asdict(config)
