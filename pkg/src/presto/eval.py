"""Benchmark protocol: random splits, depth tuning, retraining and test metrics.

Each trial holds out 10% of rows for testing and splits the rest 80/20
into train/valid.  Forests early-stop on valid, then every classifier is
refit on train+valid with its tuned round count and scored on the test
rows by NLL, RMSE of the density mean and interval coverage.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import density as dens
from .io import atomic_write, csv_text
from .intervals import IntervalMethodConfig
from .model import PrestoConfig, PrestoModel, default_gbdt, presto_fit, presto_predict

logger = logging.getLogger(__name__)

COVERAGE_LEVELS = (0.2, 0.5, 0.8, 0.9, 0.95)
DEPTH_GRID = (3, 5, 7, 9)
VARIANTS = {"structured": "structured_ce", "standard": "standard_ce"}
DATA_DIR = os.environ.get("PRESTO_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "data"))


def _grid(lo, hi, step, first, last):
    """``first``, the half-steps between ``lo`` and ``hi``, then ``last``."""
    n = int(round((hi - lo) / step))
    mids = [lo + (i + 0.5) * step for i in range(n)]
    return (first, *[round(v, 10) for v in mids], last)


@dataclass(frozen=True)
class DatasetConfig:
    """Per-dataset defaults for the benchmark.

    ``path`` is a CSV with a header; the target is ``target`` or, when
    that is None, the last column.  ``max_depth=None`` means tune it on
    the first trial over ``depth_grid``.
    """

    name: str
    path: str
    learning_rate: float
    m: int = 10
    interval: IntervalMethodConfig = field(default_factory=IntervalMethodConfig)
    target: Optional[str] = None
    max_depth: Optional[int] = None
    depth_grid: Tuple[int, ...] = DEPTH_GRID
    colsample_per_node: float = 1.0
    n_trials: int = 20

    def load(self) -> Tuple[np.ndarray, np.ndarray]:
        return load_csv(self.path, self.target)


def _ds(name, lr, **kw) -> DatasetConfig:
    return DatasetConfig(name, os.path.join(DATA_DIR, f"{name}.csv"), lr, **kw)


# Wine quality is an integer in 2..8; Naval's target sits on a 0.001 grid in
# [0.95, 1]; YearMSD years are integers.
DATASETS: Dict[str, DatasetConfig] = {
    "boston": _ds("boston", 0.01),
    "concrete": _ds("concrete", 0.01),
    "energy": _ds("energy", 0.01),
    "kin8nm": _ds("kin8nm", 0.05),
    "naval": _ds("naval", 0.05, interval=IntervalMethodConfig(
        method="fixed_rss", grid=_grid(0.95, 1.0, 0.001, 0.95, 1.0), subset_size=24)),
    "power": _ds("power", 0.05),
    "protein": _ds("protein", 0.07, n_trials=5),
    "wine": _ds("wine", 0.01, interval=IntervalMethodConfig(
        method="fixed", grid=(2.0, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.0))),
    "yacht": _ds("yacht", 0.01),
    "yearmsd": _ds("yearmsd", 0.1, m=1, max_depth=4, colsample_per_node=0.1, n_trials=1,
                   interval=IntervalMethodConfig(method="fixed", grid=_grid(1922, 2011, 1.0, 1921.5, 2011.5))),
}


def read_numeric_csv(path: str) -> Tuple[List[str], np.ndarray]:
    """Header and float matrix of a comma-separated file; empty cells become NaN."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = np.full((len(rows) - 1, len(header)), np.nan)
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ValueError(f"{path}: line {i + 2} has {len(row)} fields, header has {len(header)}")
        for j, v in enumerate(row):
            v = v.strip()
            if v:
                try:
                    data[i, j] = float(v)
                except ValueError:
                    raise ValueError(f"{path}: line {i + 2}, column {header[j]!r}: not a number: {v!r}") from None
    return header, data


def load_csv(path: str, target: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(X, y) from a numeric CSV; the target is ``target`` or the last column."""
    header, data = read_numeric_csv(path)
    col = len(header) - 1 if target is None else _column(header, target, path)
    y = data[:, col]
    if np.any(np.isnan(y)):
        raise ValueError(f"{path}: target column {header[col]!r} has empty cells")
    return np.delete(data, col, axis=1), y


def _column(header, name, path):
    if name not in header:
        raise ValueError(f"{path}: no target column {name!r} (columns: {', '.join(header)})")
    return header.index(name)


@dataclass(frozen=True)
class TrialSpec:
    dataset: str
    trial: int = 0
    seed: int = 0
    variant: str = "structured"
    test_frac: float = 0.10
    valid_frac: float = 0.20
    max_depth: Optional[int] = None
    m: Optional[int] = None
    gbdt_overrides: Tuple[Tuple[str, object], ...] = ()
    freeze_partitions: bool = False
    keep_densities: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {tuple(VARIANTS)}")
        if not (0 < self.test_frac < 1 and 0 < self.valid_frac < 1):
            raise ValueError("split fractions must lie in (0, 1)")
        object.__setattr__(self, "gbdt_overrides", tuple(sorted(dict(self.gbdt_overrides).items())))

    @property
    def trial_seed(self) -> int:
        return self.seed * 100003 + self.trial


@dataclass
class TrialResult:
    dataset: str
    trial: int
    seed: int
    variant: str
    nll: float
    n_outside_support: int
    rmse: float
    coverage: Dict[str, float]
    coverage_counts: Dict[str, int]
    n_test: int
    max_depth: int
    n_rounds: List[int]
    fit_seconds: float
    densities: Optional[List[dict]] = None

    def to_json(self, timing: bool = False) -> str:
        """One JSON line; wall-clock timing is left out unless asked for so
        that reruns produce identical bytes."""
        d = asdict(self)
        if not timing:
            d.pop("fit_seconds")
        return json.dumps(d, sort_keys=True, allow_nan=True)


def split_indices(n: int, seed: int, test_frac: float = 0.10, valid_frac: float = 0.20):
    """Shuffled (train, valid, test) row indices."""
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_frac * n))
    rest = perm[n_test:]
    n_valid = int(round(valid_frac * rest.size))
    return rest[: rest.size - n_valid], rest[rest.size - n_valid:], perm[:n_test]


def resolve_dataset(dataset) -> DatasetConfig:
    if isinstance(dataset, DatasetConfig):
        return dataset
    if dataset not in DATASETS:
        raise ValueError(f"unknown dataset {dataset!r}; known: {', '.join(DATASETS)}")
    return DATASETS[dataset]


def trial_config(ds: DatasetConfig, spec: TrialSpec, max_depth: int) -> PrestoConfig:
    gbdt = replace(default_gbdt(), learning_rate=ds.learning_rate, max_depth=max_depth,
                   colsample_per_node=ds.colsample_per_node, loss=VARIANTS[spec.variant])
    gbdt = replace(gbdt, **dict(spec.gbdt_overrides))
    return PrestoConfig(m=spec.m or ds.m, interval=ds.interval, gbdt=gbdt, seed=spec.trial_seed)


def _fit_valid(X, y, split, cfg: PrestoConfig) -> Tuple[PrestoModel, float]:
    tr, va, _ = split
    model = presto_fit(X[tr], y[tr], X[va], y[va], cfg)
    return model, float(np.mean([dens.nll(d, v) for d, v in zip(presto_predict(model, X[va]), y[va])]))


def tune_depth(ds: DatasetConfig, spec: TrialSpec, data=None, grid: Optional[Sequence[int]] = None):
    """Pick the max depth with the lowest validation NLL on ``spec``'s split.

    Returns (best depth, {depth: valid NLL}, fitted early-stopped models).
    Ties go to the shallower depth.
    """
    X, y = data if data is not None else ds.load()
    split = split_indices(len(y), spec.trial_seed, spec.test_frac, spec.valid_frac)
    scores, models = {}, {}
    for d in grid or ds.depth_grid:
        models[d], scores[d] = _fit_valid(X, y, split, trial_config(ds, spec, d))
        logger.info("%s depth %d: valid NLL %.4f", ds.name, d, scores[d])
    best = min(scores, key=lambda d: (scores[d], d))
    return best, scores, models


def score_densities(densities, y_test, levels=COVERAGE_LEVELS) -> dict:
    """NLL, RMSE of density means and coverage for aligned densities and targets."""
    y_test = np.asarray(y_test, dtype=float)
    nlls = np.array([dens.nll(d, v) for d, v in zip(densities, y_test)])
    outside = int(np.sum(~np.isfinite(nlls)))
    if outside:
        logger.warning("%d of %d test targets fall outside the predicted support", outside, len(nlls))
    means = np.array([d.mean() for d in densities])
    counts = coverage_counts(densities, y_test, levels)
    n = len(y_test)
    return {
        "nll": float(nlls.mean()),
        "n_outside_support": outside,
        "rmse": float(np.sqrt(np.mean((means - y_test) ** 2))),
        "coverage": {_level_key(a): counts[a] / n for a in levels},
        "coverage_counts": {_level_key(a): counts[a] for a in levels},
    }


def _level_key(level: float) -> str:
    return f"{level:g}"


def coverage_counts(densities, y_test, levels=COVERAGE_LEVELS) -> Dict[float, int]:
    """Rows whose target lies in the central interval, per nominal level."""
    out = {}
    for a in levels:
        alpha = 1.0 - a
        inside = 0
        for d, v in zip(densities, y_test):
            lo, hi = d.quantile([alpha / 2, 1 - alpha / 2])
            inside += int(lo <= v <= hi)
        out[a] = inside
    return out


def coverage_eval(densities, y_test, levels=COVERAGE_LEVELS) -> Dict[float, float]:
    """Fraction of rows whose target falls inside each central interval."""
    if len(densities) != len(y_test):
        raise ValueError(f"{len(densities)} densities for {len(y_test)} targets")
    n = len(y_test)
    return {a: c / n for a, c in coverage_counts(densities, y_test, levels).items()}


def run_trial(spec: TrialSpec, dataset=None, data=None, max_depth: Optional[int] = None,
              valid_model: Optional[PrestoModel] = None) -> TrialResult:
    """One full trial: early-stopped fit, retrain on train+valid, test metrics.

    ``dataset`` defaults to ``spec.dataset`` looked up in :data:`DATASETS`;
    ``data`` supplies (X, y) directly.  The max depth is, in order,
    ``spec.max_depth``, ``max_depth``, the dataset default, or tuned on
    this trial's split.  ``valid_model`` reuses an early-stopped fit with
    the same config.
    """
    ds = resolve_dataset(dataset if dataset is not None else spec.dataset)
    X, y = data if data is not None else ds.load()
    t0 = time.perf_counter()
    depth = spec.max_depth or max_depth or ds.max_depth
    if depth is None:
        depth, _, models = tune_depth(ds, spec, (X, y))
        valid_model = models[depth]
    cfg = trial_config(ds, spec, depth)
    tr, va, te = split_indices(len(y), spec.trial_seed, spec.test_frac, spec.valid_frac)
    if valid_model is None:
        valid_model = presto_fit(X[tr], y[tr], X[va], y[va], cfg)
    full = np.concatenate([tr, va])
    frozen = valid_model.partitions if spec.freeze_partitions else None
    model = presto_fit(X[full], y[full], config=cfg, n_rounds=valid_model.n_rounds, partitions=frozen)
    densities = presto_predict(model, X[te])
    metrics = score_densities(densities, y[te])
    return TrialResult(
        dataset=ds.name, trial=spec.trial, seed=spec.seed, variant=spec.variant,
        n_test=len(te), max_depth=depth, n_rounds=valid_model.n_rounds,
        fit_seconds=time.perf_counter() - t0,
        densities=[d.to_dict() for d in densities] if spec.keep_densities else None,
        **metrics,
    )


def run_trials(dataset, n_trials: Optional[int] = None, variant: str = "structured", seed: int = 0,
               data=None, max_depth: Optional[int] = None, **spec_kw) -> List[TrialResult]:
    """Run trials 0..n-1; the depth tuned on trial 0 is reused for the rest."""
    ds = resolve_dataset(dataset)
    data = data if data is not None else ds.load()
    results = []
    for t in range(n_trials or ds.n_trials):
        spec = TrialSpec(ds.name, trial=t, seed=seed, variant=variant, **spec_kw)
        res = run_trial(spec, ds, data, max_depth=max_depth)
        max_depth = res.max_depth
        logger.info("%s %s trial %d: nll %.4f rmse %.4f depth %d (%.1fs)", ds.name, variant, t,
                    res.nll, res.rmse, res.max_depth, res.fit_seconds)
        results.append(res)
    return results


def aggregate(results: Sequence[TrialResult]) -> Dict[str, Tuple[float, Optional[float]]]:
    """Mean and standard error (sample stdev / sqrt(n)) per metric; SE is None for one trial."""
    if not results:
        raise ValueError("no results to aggregate")
    cols = {"nll": [r.nll for r in results], "rmse": [r.rmse for r in results]}
    for key in results[0].coverage:
        cols[f"coverage_{key}"] = [r.coverage[key] for r in results]
    return {k: _mean_se(v) for k, v in cols.items()}


def _mean_se(values) -> Tuple[float, Optional[float]]:
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return float(v[0]), None
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def learning_curve(spec: TrialSpec, m_max: int, dataset=None, data=None,
                   max_depth: Optional[int] = None) -> List[Tuple[int, float]]:
    """Test NLL of the average of the first c forests, for c = 1..m_max.

    A single model with ``m_max`` forests is fit (per the trial protocol)
    and its prefixes are scored, so the curve is nested.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    ds = resolve_dataset(dataset if dataset is not None else spec.dataset)
    X, y = data if data is not None else ds.load()
    depth = spec.max_depth or max_depth or ds.max_depth or ds.depth_grid[0]
    cfg = replace(trial_config(ds, spec, depth), m=m_max)
    tr, va, te = split_indices(len(y), spec.trial_seed, spec.test_frac, spec.valid_frac)
    valid_model = presto_fit(X[tr], y[tr], X[va], y[va], cfg)
    full = np.concatenate([tr, va])
    model = presto_fit(X[full], y[full], config=cfg, n_rounds=valid_model.n_rounds)
    curve = []
    for c in range(1, m_max + 1):
        edges, H = model.predict_heights(X[te], members=range(c))
        part = dens.BinPartition(edges)
        nll = np.mean([dens.nll(dens.PiecewiseConstantDensity(part, h), v) for h, v in zip(H, y[te])])
        curve.append((c, float(nll)))
    return curve


@dataclass
class VariantComparison:
    dataset: str
    structured: List[TrialResult]
    standard: List[TrialResult]

    @property
    def differences(self) -> np.ndarray:
        """Per-trial structured minus standard NLL."""
        return np.array([a.nll - b.nll for a, b in zip(self.structured, self.standard)])

    def summary(self) -> dict:
        s, se_s = _mean_se([r.nll for r in self.structured])
        t, se_t = _mean_se([r.nll for r in self.standard])
        return {"dataset": self.dataset, "structured_nll": s, "structured_se": se_s,
                "standard_nll": t, "standard_se": se_t, "mean_difference": s - t,
                "structured_wins": bool(s <= t)}


def variant_comparison(dataset, n_trials: Optional[int] = None, seed: int = 0, data=None,
                       structured_overrides=(), **kw) -> VariantComparison:
    """Structured vs standard loss on identical splits and seeds."""
    ds = resolve_dataset(dataset)
    data = data if data is not None else ds.load()
    a = run_trials(ds, n_trials, "structured", seed, data, gbdt_overrides=tuple(structured_overrides), **kw)
    b = run_trials(ds, n_trials, "standard", seed, data, **kw)
    return VariantComparison(ds.name, a, b)


def write_jsonl(path: str, results: Sequence[TrialResult]) -> None:
    atomic_write(path, "".join(r.to_json() + "\n" for r in results))


def summary_rows(name: str, variant: str, summary: dict) -> dict:
    row = {"dataset": name, "variant": variant}
    for k, (mean, se) in summary.items():
        row[k] = _fmt(mean)
        row[f"{k}_se"] = "NA" if se is None else _fmt(se)
    return row


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def write_summary_csv(path: str, rows: Sequence[dict]) -> None:
    atomic_write(path, csv_text(rows))


def write_curve_csv(path: str, curve: Sequence[Tuple[int, float]]) -> None:
    atomic_write(path, csv_text([{"m": c, "nll": repr(v)} for c, v in curve]))
