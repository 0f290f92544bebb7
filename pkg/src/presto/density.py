"""Piecewise-constant densities over a bin partition.

A density is stored as its edges ``b_0 < ... < b_k`` and the ``k`` bin
heights.  Queries follow the half-open bin convention ``[b_{i-1}, b_i)``
with the right endpoint ``b_k`` assigned to the last bin.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

NORM_TOL = 1e-9


class ZeroDensityError(ValueError):
    """An observation fell where the predicted density is zero."""

    def __init__(self, y: float):
        super().__init__(f"density is zero at y={y!r}")
        self.y = y


@dataclass(frozen=True)
class BinPartition:
    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("a partition needs at least 2 edges")
        if not np.all(np.isfinite(edges)):
            raise ValueError("partition edges must be finite")
        if np.any(np.diff(edges) <= 0):
            raise ValueError(f"edges must be strictly increasing: {edges.tolist()}")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def bin_index(self, x) -> np.ndarray:
        """Bin of each ``x``; -1 outside ``[b_0, b_k]``."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx = np.where(x == self.edges[-1], self.n_bins - 1, idx)
        inside = (x >= self.edges[0]) & (x <= self.edges[-1])
        return np.where(inside, idx, -1)

    def __eq__(self, other):
        return isinstance(other, BinPartition) and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash(self.edges.tobytes())


@dataclass(frozen=True)
class PiecewiseConstantDensity:
    partition: BinPartition
    heights: np.ndarray

    def __post_init__(self):
        heights = np.asarray(self.heights, dtype=float)
        if heights.shape != (self.partition.n_bins,):
            raise ValueError(
                f"expected {self.partition.n_bins} heights, got shape {heights.shape}"
            )
        if np.any(heights < 0) or not np.all(np.isfinite(heights)):
            raise ValueError("heights must be finite and nonnegative")
        total = float(np.sum(heights * self.partition.widths))
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"density integrates to {total!r}, not 1")
        heights.setflags(write=False)
        object.__setattr__(self, "heights", heights)

    @property
    def edges(self) -> np.ndarray:
        return self.partition.edges

    @property
    def masses(self) -> np.ndarray:
        return self.heights * self.partition.widths

    def _cum(self) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        # pin the endpoint so cdf(b_k) == 1 exactly
        return cum / cum[-1]

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.partition.bin_index(x)
        out = np.where(idx >= 0, self.heights[np.clip(idx, 0, None)], 0.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.edges, self._cum())
        return out if out.ndim else float(out)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)) or np.any(np.isnan(q)):
            raise ValueError(f"quantile level must lie in [0, 1], got {q}")
        cum = self._cum()
        j = np.searchsorted(cum, q, side="left")
        j = np.clip(j, 1, self.partition.n_bins)
        lo = self.edges[j - 1]
        h = self.heights[j - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(h > 0, (q - cum[j - 1]) / h, 0.0)
        out = np.minimum(lo + np.maximum(step, 0.0), self.edges[j])
        out = np.where(q <= 0, self.edges[0], out)
        return out if out.ndim else float(out)

    def mean(self) -> float:
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        return float(np.sum(self.masses * mids))

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "heights": self.heights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseConstantDensity":
        return cls(BinPartition(d["edges"]), d["heights"])


def make_density(probs, partition: BinPartition) -> PiecewiseConstantDensity:
    """Turn class probabilities over the bins into a density."""
    p = np.asarray(probs, dtype=float)
    if p.shape != (partition.n_bins,):
        raise ValueError(f"got {p.size} probabilities for {partition.n_bins} bins")
    if np.any(p < 0):
        raise ValueError("probabilities must be nonnegative")
    if abs(p.sum() - 1.0) > NORM_TOL:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return PiecewiseConstantDensity(partition, p / partition.widths)


def merge_edges(partitions: Sequence[BinPartition]) -> np.ndarray:
    return np.unique(np.concatenate([b.edges for b in partitions]))


def heights_on(edges: np.ndarray, partition: BinPartition, heights: np.ndarray) -> np.ndarray:
    """Re-express heights (shape ``(..., k)``) on a refinement ``edges`` of ``partition``."""
    mids = 0.5 * (edges[:-1] + edges[1:])
    idx = partition.bin_index(mids)
    vals = np.take(heights, np.clip(idx, 0, None), axis=-1)
    return np.where(idx >= 0, vals, 0.0)


def _renormalize(edges: np.ndarray, heights: np.ndarray) -> np.ndarray:
    total = heights @ np.diff(edges)
    drift = np.abs(total - 1.0)
    if np.any(drift > NORM_TOL):
        logger.warning("renormalizing averaged density (max drift %.3g)", drift.max())
        heights = heights / np.asarray(total)[..., None]
    return heights


def average_heights(partitions: Sequence[BinPartition], heights: Sequence[np.ndarray]):
    """Pointwise mean of densities given as (partition, heights) pairs.

    ``heights[i]`` may carry leading batch dimensions; the result has the
    same leading shape over the merged edge set.
    """
    edges = merge_edges(partitions)
    acc = None
    for part, h in zip(partitions, heights):
        on = heights_on(edges, part, np.asarray(h, dtype=float))
        acc = on if acc is None else acc + on
    return edges, _renormalize(edges, acc / len(partitions))


def average(densities: Sequence[PiecewiseConstantDensity]) -> PiecewiseConstantDensity:
    if len(densities) == 0:
        raise ValueError("cannot average an empty list of densities")
    edges, h = average_heights(
        [d.partition for d in densities], [d.heights for d in densities]
    )
    return PiecewiseConstantDensity(BinPartition(edges), h)


def pdf_at(d: PiecewiseConstantDensity, x):
    return d.pdf(x)


def cdf_at(d: PiecewiseConstantDensity, x):
    return d.cdf(x)


def quantile(d: PiecewiseConstantDensity, q):
    return d.quantile(q)


def mean(d: PiecewiseConstantDensity) -> float:
    return d.mean()


def nll(d: PiecewiseConstantDensity, y: float, strict: bool = False) -> float:
    """Negative log density at ``y``.

    Returns ``inf`` where the density vanishes, or raises
    :class:`ZeroDensityError` when ``strict``.
    """
    p = d.pdf(y)
    if p <= 0:
        if strict:
            raise ZeroDensityError(float(y))
        return float("inf")
    return -float(np.log(p))
