"""Choosing the bin partition each coarse classifier is trained on."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .density import BinPartition

METHODS = ("rand_quantile", "fixed", "fixed_rss")


@dataclass(frozen=True)
class IntervalMethodConfig:
    method: str = "rand_quantile"
    r: int = 25
    extend: bool = True
    extend_params: tuple = (0.25, 0.75, 0.25)
    grid: Optional[tuple] = None
    subset_size: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown interval method {self.method!r}; expected one of {METHODS}")
        object.__setattr__(self, "extend_params", tuple(float(v) for v in self.extend_params))
        q_min, q_max, t = self.extend_params
        if not (0 <= q_min < q_max <= 1) or t < 0:
            raise ValueError(f"bad extend_params {self.extend_params}")
        if self.method == "rand_quantile" and self.r < 1:
            raise ValueError("r must be a positive integer")
        if self.method in ("fixed", "fixed_rss"):
            if self.grid is None:
                raise ValueError(f"method {self.method!r} needs a grid")
            object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
            _check_grid(self.grid)
        if self.method == "fixed_rss":
            if self.subset_size is None:
                raise ValueError("fixed_rss needs subset_size")
            if not 0 <= self.subset_size <= len(self.grid) - 2:
                raise ValueError(
                    f"subset_size={self.subset_size} exceeds the {len(self.grid) - 2} interior grid points"
                )


def _check_grid(grid: Sequence[float]) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise ValueError("grid needs at least 2 points")
    if np.any(np.diff(g) <= 0):
        raise ValueError(f"grid must be strictly increasing: {g.tolist()}")
    return g


def rand_quantile_edges(
    y_train,
    r: int,
    extend: bool = False,
    extend_params=(0.25, 0.75, 0.25),
    rng: Optional[np.random.Generator] = None,
    z=None,
) -> BinPartition:
    """Random-quantile bin edges.

    Draws ``r`` uniform levels (or uses ``z`` when given), maps them to
    empirical quantiles of ``y_train`` and places edges at the midpoints
    between neighbouring quantiles, keeping the observed min and max.
    With ``extend``, one extra bin of width ``t * (Q(q_max) - Q(q_min))``
    is added beyond each end.
    """
    y = np.asarray(y_train, dtype=float)
    if y.size == 0:
        raise ValueError("y_train is empty")
    if r < 1:
        raise ValueError("r must be >= 1")
    if z is None:
        if rng is None:
            raise ValueError("need an rng or explicit z")
        z = rng.random(r)
    z = np.sort(np.asarray(z, dtype=float))
    a = np.concatenate([[y.min()], np.quantile(y, z), [y.max()]])
    cuts = np.concatenate([[a[0]], 0.5 * (a[:-1] + a[1:]), [a[-1]]])
    if extend:
        q_min, q_max, t = extend_params
        u, v = np.quantile(y, [q_min, q_max])
        w = (v - u) * t
        cuts = np.concatenate([cuts, [y.min() - w, y.max() + w]])
    edges = np.unique(cuts)
    if edges.size < 2:
        raise ValueError(
            "all training targets are equal; cannot form a bin (enable extend with a nonzero spread)"
        )
    return BinPartition(edges)


def fixed_edges(grid) -> BinPartition:
    return BinPartition(_check_grid(grid))


def fixed_rss_edges(grid, subset_size: int, rng: np.random.Generator) -> BinPartition:
    """Keep the grid's end points plus a uniform random subset of its interior."""
    g = _check_grid(grid)
    interior = g[1:-1]
    if not 0 <= subset_size <= interior.size:
        raise ValueError(f"subset_size={subset_size} but only {interior.size} interior points")
    keep = rng.choice(interior.size, size=subset_size, replace=False)
    return BinPartition(np.concatenate([[g[0]], np.sort(interior[keep]), [g[-1]]]))


def draw_partition(cfg: IntervalMethodConfig, y_train, rng: np.random.Generator) -> BinPartition:
    if cfg.method == "rand_quantile":
        return rand_quantile_edges(y_train, cfg.r, cfg.extend, cfg.extend_params, rng)
    if cfg.method == "fixed":
        return fixed_edges(cfg.grid)
    return fixed_rss_edges(cfg.grid, cfg.subset_size, rng)


def discretize(y, partition: BinPartition) -> np.ndarray:
    """Map targets to 0-based bin labels; ``y == b_k`` lands in the last bin."""
    y = np.asarray(y, dtype=float)
    idx = partition.bin_index(y)
    bad = idx < 0
    if np.any(bad):
        v = y[bad][0] if y.ndim else float(y)
        raise ValueError(
            f"y={v!r} lies outside the partition range "
            f"[{partition.edges[0]!r}, {partition.edges[-1]!r}]"
        )
    return idx
