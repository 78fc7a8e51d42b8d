"""Summary statistics and the two-sided Wilcoxon rank-sum test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .benchmarks import zero_small

A_BETTER = "a_better"
NO_DIFFERENCE = "no_difference"
B_BETTER = "b_better"

# below this many total observations the null distribution is computed exactly
EXACT_MAX_TOTAL = 20


@dataclass(frozen=True)
class StatsRow:
    function_id: str
    best: float
    worst: float
    median: float
    mean: float
    std: float
    runs: int

    def as_list(self):
        return [self.function_id, self.best, self.worst, self.median, self.mean, self.std, self.runs]


def summarize(errors, function_id: str = "") -> StatsRow:
    """Best/worst/median/mean/sample-std of errors after zeroing values <= 1e-8."""
    e = zero_small(np.asarray(errors, dtype=float).ravel())
    if e.size == 0:
        raise ValueError("cannot summarise an empty sample")
    std = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
    return StatsRow(function_id, float(e.min()), float(e.max()), float(np.median(e)), float(e.mean()), std, int(e.size))


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties receive the average of the ranks they span."""
    order = np.argsort(values, kind="mergesort")
    sorted_v = values[order]
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_pvalue(ranks2: np.ndarray, n1: int, observed2: int) -> float:
    """P(|W - E W| >= |w - E W|) under random assignment, from doubled integer ranks."""
    total = int(ranks2.sum())
    n = len(ranks2)
    # counts[k][s]: number of k-subsets of the ranks seen so far with doubled sum s
    counts = [dict() for _ in range(n1 + 1)]
    counts[0][0] = 1
    for r in ranks2:
        r = int(r)
        for k in range(min(n1, n) - 1, -1, -1):
            for s, c in counts[k].items():
                counts[k + 1][s + r] = counts[k + 1].get(s + r, 0) + c
    # compare 2*n*W against n1*total to stay in integers
    obs_dev = abs(n * observed2 - n1 * total)
    hits = sum(c for s, c in counts[n1].items() if abs(n * s - n1 * total) >= obs_dev)
    return hits / math.comb(n, n1)


def rank_sum_pvalue(a, b) -> float:
    """Two-sided p-value of the Wilcoxon rank-sum (Mann-Whitney U) test.

    Exact permutation distribution (ties kept as midranks) for small samples,
    tie-corrected normal approximation otherwise.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n1, n2 = len(a), len(b)
    n = n1 + n2
    ranks = midranks(np.concatenate([a, b]))
    if n <= EXACT_MAX_TOTAL:
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        return _exact_pvalue(ranks2, n1, int(ranks2[:n1].sum()))
    w = ranks[:n1].sum()
    mean = n1 * (n + 1) / 2.0
    _, counts = np.unique(ranks, return_counts=True)
    tie = float(np.sum(counts**3 - counts))
    var = n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return 1.0
    z = (w - mean) / math.sqrt(var)
    return float(min(1.0, 2 * norm.sf(abs(z))))


def rank_sum_test(a, b, significance: float = 0.05) -> str:
    """``a_better`` / ``no_difference`` / ``b_better`` for error samples (smaller is better).

    The direction of a significant difference follows the medians, then the means.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) < 3 or len(b) < 3:
        raise ValueError("rank-sum test needs at least 3 observations per sample")
    if rank_sum_pvalue(a, b) >= significance:
        return NO_DIFFERENCE
    ma, mb = np.median(a), np.median(b)
    if ma == mb:
        ma, mb = a.mean(), b.mean()
    if ma < mb:
        return A_BETTER
    if mb < ma:
        return B_BETTER
    return NO_DIFFERENCE
