"""Two-sided Mann-Whitney U test."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

EXACT_LIMIT = 20


class MannWhitneyResult(NamedTuple):
    u: float
    p: float


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_tails(doubled_ranks: np.ndarray, n1: int, doubled_u1: int) -> tuple[float, float]:
    """P(2*U_1 <= doubled_u1) and P(2*U_1 >= doubled_u1) under random assignment of ``n1`` ranks to sample 1.

    Counts subsets by their doubled rank sum (integers even with midranks).
    With ties the distribution need not be symmetric, so both tails are kept.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros((n1 + 1, total + 1))
    counts[0, 0] = 1.0
    for r in doubled_ranks.astype(np.int64):
        # iterate k downwards so every rank is used at most once
        for k in range(n1, 0, -1):
            counts[k, r:] += counts[k - 1, :total + 1 - r]
    ways = counts[n1]
    doubled = np.arange(total + 1) - n1 * (n1 + 1)
    norm = ways.sum()
    return float(ways[doubled <= doubled_u1].sum() / norm), float(ways[doubled >= doubled_u1].sum() / norm)


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
    """U = min(U_a, U_b) and the two-sided p value.

    Exact permutation distribution when both samples are smaller than 20,
    otherwise the normal approximation with tie correction and a continuity
    correction of 1/2.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    ranks = midranks(np.concatenate([a, b]))
    r1 = ranks[:n1].sum()
    u1 = r1 - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1
    u = min(u1, u2)
    if max(n1, n2) < EXACT_LIMIT:
        lower, upper = _exact_tails(np.rint(2 * ranks).astype(np.int64), n1, int(round(2 * u1)))
        p = 2.0 * min(lower, upper)
        return MannWhitneyResult(float(u), min(1.0, p))
    n = n1 + n2
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return MannWhitneyResult(float(u), 1.0)
    z = (abs(u - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
    p = math.erfc(max(z, 0.0) / math.sqrt(2.0))
    return MannWhitneyResult(float(u), min(1.0, p))
