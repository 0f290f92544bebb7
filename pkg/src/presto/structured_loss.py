"""Structured cross-entropy over weighted partitions of ordinal class labels."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy.special import logsumexp

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class WeightedPartitionSet:
    """Partitions of ``{0, ..., k-1}`` with weights summing to one.

    ``block_ids[i, c]`` is the index of the block of partition ``i`` that
    holds class ``c``.
    """

    partitions: tuple
    weights: np.ndarray
    block_ids: np.ndarray

    @classmethod
    def from_blocks(cls, partitions: Sequence[Sequence[Sequence[int]]], weights) -> "WeightedPartitionSet":
        w = np.asarray(weights, dtype=float)
        if len(partitions) == 0 or w.shape != (len(partitions),):
            raise ValueError("need one weight per partition")
        if np.any(w <= 0):
            raise ValueError("partition weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"partition weights sum to {w.sum()!r}, not 1")
        k = sum(len(b) for b in partitions[0])
        ids = np.full((len(partitions), k), -1, dtype=np.int64)
        parts = []
        for i, blocks in enumerate(partitions):
            blocks = tuple(tuple(int(c) for c in b) for b in blocks)
            for j, block in enumerate(blocks):
                if len(block) == 0:
                    raise ValueError(f"partition {i} has an empty block")
                for c in block:
                    if not 0 <= c < k or ids[i, c] != -1:
                        raise ValueError(f"partition {i} does not partition 0..{k - 1}")
                    ids[i, c] = j
            if np.any(ids[i] < 0):
                raise ValueError(f"partition {i} does not cover 0..{k - 1}")
            parts.append(blocks)
        w.setflags(write=False)
        ids.setflags(write=False)
        return cls(tuple(parts), w, ids)

    @classmethod
    def singletons(cls, k: int) -> "WeightedPartitionSet":
        return cls.from_blocks([[[c] for c in range(k)]], [1.0])

    @property
    def n_classes(self) -> int:
        return self.block_ids.shape[1]

    def block_of(self, i: int, c: int) -> tuple:
        return self.partitions[i][self.block_ids[i, c]]


def _runs(start: int, k: int, s: int) -> list:
    return [list(range(a, min(a + s, k))) for a in range(start, k, s)]


def standard_ordinal_partition(k: int, w0: float, s: int) -> WeightedPartitionSet:
    """Singletons with weight ``w0`` plus ``s`` phase-shifted runs of length ``s``.

    Phase ``j`` (1-based) puts the first ``j - 1`` classes in a leading
    block and groups the rest in consecutive runs of ``s``; the last run
    may be short.  Each phase gets weight ``(1 - w0) / s``.
    """
    if k < 2:
        raise ValueError("need at least 2 classes")
    if not 0 < w0 < 1:
        raise ValueError(f"w0 must lie in (0, 1), got {w0}")
    # s == 1 is allowed for any k: it only adds a second singleton partition
    if s < 1 or (s > 1 and not s < k / 2):
        raise ValueError(f"block size s={s} must satisfy 1 <= s < k/2 (k={k})")
    partitions = [[[c] for c in range(k)]]
    for j in range(1, s + 1):
        lead = [list(range(j - 1))] if j > 1 else []
        partitions.append(lead + _runs(j - 1, k, s))
    weights = [w0] + [(1.0 - w0) / s] * s
    return WeightedPartitionSet.from_blocks(partitions, weights)


def default_block_size(k: int) -> int:
    """Rounded square root of ``k``, clamped to ``1 <= s < k/2``."""
    s = int(math.floor(math.sqrt(k) + 0.5))
    while s > 1 and not s < k / 2:
        s -= 1
    return max(s, 1)


def structured_ce(probs, true_class: int, wps: WeightedPartitionSet) -> float:
    """Weighted mean over partitions of ``-log P(block holding true_class)``."""
    p = np.asarray(probs, dtype=float)
    total = 0.0
    for i, w in enumerate(wps.weights):
        ids = wps.block_ids[i]
        mass = p[ids == ids[true_class]].sum()
        total += w * (-math.log(mass) if mass > 0 else math.inf)
    return total


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _true_block_masks(wps: WeightedPartitionSet, labels: np.ndarray):
    for i, w in enumerate(wps.weights):
        ids = wps.block_ids[i]
        yield w, ids[None, :] == ids[labels][:, None]


def structured_ce_rows(scores: np.ndarray, labels: np.ndarray, wps: WeightedPartitionSet) -> np.ndarray:
    """Per-row structured CE evaluated from pre-softmax scores."""
    lse = logsumexp(scores, axis=1)
    out = np.zeros(scores.shape[0])
    for w, mask in _true_block_masks(wps, labels):
        out += w * (lse - logsumexp(np.where(mask, scores, -np.inf), axis=1))
    return out


def structured_ce_grad_hess_rows(scores: np.ndarray, labels: np.ndarray, wps: WeightedPartitionSet):
    """Gradient and diagonal Hessian w.r.t. the scores, one row per sample.

    Each term ``-log P_B`` equals ``lse(s) - lse_B(s)``, so its gradient is
    ``p - q`` and its Hessian diagonal ``p(1-p) - q(1-q)``, where ``q`` is
    the softmax restricted to the true block ``B``.
    """
    p = softmax(scores)
    q_bar = np.zeros_like(p)
    q_var = np.zeros_like(p)
    for w, mask in _true_block_masks(wps, labels):
        masked = np.where(mask, scores, -np.inf)
        q = np.exp(masked - masked.max(axis=1, keepdims=True))
        q /= q.sum(axis=1, keepdims=True)
        q_bar += w * q
        q_var += w * q * (1.0 - q)
    return p - q_bar, p * (1.0 - p) - q_var


@njit(cache=True)
def _grad_hess_kernel(scores, labels, block_ids, weights, g, h):
    n, k = scores.shape
    p = np.empty(k)
    q = np.empty(k)
    for r in range(n):
        m = scores[r, 0]
        for j in range(1, k):
            if scores[r, j] > m:
                m = scores[r, j]
        z = 0.0
        for j in range(k):
            p[j] = math.exp(scores[r, j] - m)
            z += p[j]
        for j in range(k):
            p[j] /= z
            g[j, r] = p[j]
            h[j, r] = p[j] * (1.0 - p[j])
        for i in range(weights.shape[0]):
            w = weights[i]
            b = block_ids[i, labels[r]]
            mb = -np.inf
            for j in range(k):
                if block_ids[i, j] == b and scores[r, j] > mb:
                    mb = scores[r, j]
            zb = 0.0
            for j in range(k):
                if block_ids[i, j] == b:
                    q[j] = math.exp(scores[r, j] - mb)
                    zb += q[j]
            for j in range(k):
                if block_ids[i, j] == b:
                    qj = q[j] / zb
                    g[j, r] -= w * qj
                    h[j, r] -= w * qj * (1.0 - qj)


def grad_hess_by_class(scores: np.ndarray, labels: np.ndarray, wps: WeightedPartitionSet):
    """Same values as :func:`structured_ce_grad_hess_rows`, transposed to (k, n)."""
    n, k = scores.shape
    g = np.empty((k, n))
    h = np.empty((k, n))
    _grad_hess_kernel(np.ascontiguousarray(scores, dtype=float), labels.astype(np.int64),
                      wps.block_ids, wps.weights, g, h)
    return g, h


def structured_ce_grad_hess(scores, true_class: int, wps: WeightedPartitionSet):
    s = np.asarray(scores, dtype=float)[None, :]
    g, h = structured_ce_grad_hess_rows(s, np.array([true_class]), wps)
    return g[0], h[0]


def cross_entropy_rows(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return logsumexp(scores, axis=1) - scores[np.arange(len(labels)), labels]


def softmax_grad_hess_rows(scores: np.ndarray, labels: np.ndarray):
    p = softmax(scores)
    g = p.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    return g, p * (1.0 - p)
