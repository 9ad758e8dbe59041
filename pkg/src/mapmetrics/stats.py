"""Pearson, Spearman and Kendall (tau-b) correlation coefficients."""

from __future__ import annotations

import math

import numpy as np

from .errors import UndefinedCorrelationError


def _check_pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise ValueError("correlation needs at least 3 samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("samples must be finite")
    return x, y


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero variance: correlation undefined")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pearson(x, y) -> float:
    return _pearson(*_check_pair(x, y))


def rankdata(a) -> np.ndarray:
    """1-based ranks, ties get the average of the ranks they span."""
    a = np.asarray(a, dtype=float).ravel()
    order = np.argsort(a, kind="mergesort")
    s = a[order]
    boundaries = np.flatnonzero(np.diff(s)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(a)]])
    mid = (starts + ends + 1) / 2.0
    ranks = np.empty(len(a))
    ranks[order] = np.repeat(mid, ends - starts)
    return ranks


def spearman(x, y) -> float:
    x, y = _check_pair(x, y)
    return _pearson(rankdata(x), rankdata(y))


def _tie_pairs(sorted_values: np.ndarray) -> int:
    _, counts = np.unique(sorted_values, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def _count_inversions(seq: list) -> int:
    """Bottom-up merge sort; number of strictly decreasing pairs."""
    n = len(seq)
    src = list(seq)
    dst = [0.0] * n
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    swaps += mid - i
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
        src, dst = dst, src
        width *= 2
    return swaps


def kendall(x, y) -> float:
    """Kendall tau-b in O(n log n) (Knight's merge-count algorithm)."""
    x, y = _check_pair(x, y)
    n = len(x)
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    # pairs tied in both x and y
    joint = np.flatnonzero((np.diff(xs) != 0) | (np.diff(ys) != 0)) + 1
    runs = np.diff(np.concatenate([[0], joint, [n]]))
    n3 = int(np.sum(runs * (runs - 1) // 2))
    swaps = _count_inversions(ys.tolist())
    n2 = _tie_pairs(np.sort(ys))
    denom = (n0 - n1) * (n0 - n2)
    if denom == 0:
        raise UndefinedCorrelationError("all pairs tied: Kendall tau undefined")
    tau = (n0 - n1 - n2 + n3 - 2 * swaps) / math.sqrt(denom)
    return max(-1.0, min(1.0, tau))
