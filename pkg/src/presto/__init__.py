"""Probabilistic regression by averaging coarse boosted classifiers."""
from .density import BinPartition, PiecewiseConstantDensity, ZeroDensityError, average, make_density
from .gbdt import BoostedForest, GbdtConfig
from .intervals import IntervalMethodConfig, discretize, draw_partition, rand_quantile_edges
from .model import (
    PrestoConfig,
    PrestoModel,
    PrestoRegressor,
    presto_fit,
    presto_interval,
    presto_point_estimate,
    presto_predict,
)
from .structured_loss import WeightedPartitionSet, standard_ordinal_partition, structured_ce

__all__ = [
    "BinPartition", "PiecewiseConstantDensity", "ZeroDensityError", "average", "make_density",
    "BoostedForest", "GbdtConfig", "IntervalMethodConfig", "discretize", "draw_partition",
    "rand_quantile_edges", "PrestoConfig", "PrestoModel", "PrestoRegressor", "presto_fit",
    "presto_interval", "presto_point_estimate", "presto_predict", "WeightedPartitionSet",
    "standard_ordinal_partition", "structured_ce",
]
