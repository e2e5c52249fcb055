"""Correlation and two-sample tests for the case-level validation steps.

Only the tail probabilities lean on scipy (``betainc`` for Student t);
statistics, ranks and the exact Mann-Whitney null distribution are
computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betainc

EXACT_MWU_MAX_N = 12


@dataclass(frozen=True)
class CorrelationResult:
    method: str
    r: float
    p_value: float
    n: int


@dataclass(frozen=True)
class TwoSampleResult:
    method: str
    u_statistic: float
    p_value: float
    n1: int
    n2: int
    median1: float
    median2: float
    iqr1: tuple
    iqr2: tuple
    exact: bool


def student_t_two_sided(t: float, df: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def normal_two_sided(z: float) -> float:
    """``P(|Z| >= |z|)`` for a standard normal."""
    return math.erfc(abs(z) / math.sqrt(2.0))


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be 1-D and of equal length")
    if x.size < 3:
        raise ValueError("need at least 3 paired observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    return x, y


def _corr(x, y) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("correlation undefined: zero variance input")
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _corr_p(r: float, n: int) -> float:
    if abs(r) == 1.0:
        return 0.0
    df = n - 2
    t = r * math.sqrt(df / (1.0 - r * r))
    return min(1.0, student_t_two_sided(t, df))


def pearson(x, y) -> CorrelationResult:
    x, y = _check_pair(x, y)
    r = _corr(x, y)
    return CorrelationResult("pearson", r, _corr_p(r, x.size), int(x.size))


def rankdata(a) -> np.ndarray:
    """1-based mid-ranks (ties share their average rank)."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    ranks = np.empty(a.size, dtype=np.float64)
    # boundaries of runs of equal values
    edges = np.flatnonzero(np.diff(sorted_a)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [a.size]))
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + e + 1) / 2.0
    return ranks


def spearman(x, y) -> CorrelationResult:
    x, y = _check_pair(x, y)
    r = _corr(rankdata(x), rankdata(y))
    return CorrelationResult("spearman", r, _corr_p(r, x.size), int(x.size))


def descriptives(xs):
    """``(mean, median, q1, q3)``; quartiles by linear interpolation."""
    a = np.asarray(xs, dtype=np.float64)
    if a.size == 0:
        raise ValueError("descriptives of an empty sample")
    q1, med, q3 = np.percentile(a, [25, 50, 75], method="linear")
    return float(a.mean()), float(med), float(q1), float(q3)


@lru_cache(maxsize=None)
def _u_counts(n1: int, n2: int) -> tuple:
    """Number of arrangements giving each U in 0..n1*n2 (no ties)."""
    # f[i][j] holds the count vector for samples of size i and j
    prev = [np.ones(1, dtype=object) for _ in range(n2 + 1)]
    for i in range(1, n1 + 1):
        cur = [np.zeros(1, dtype=object)] * (n2 + 1)
        cur[0] = np.ones(1, dtype=object)
        for j in range(1, n2 + 1):
            # largest element is from sample 1 (adds j to U) or sample 2
            a = prev[j]
            b = cur[j - 1]
            out = np.zeros(i * j + 1, dtype=object)
            out[j:j + a.size] += a
            out[:b.size] += b
            cur[j] = out
        prev = cur
    return tuple(int(c) for c in prev[n2])


def mwu_exact_p(u: float, n1: int, n2: int) -> float:
    """Two-sided exact p-value of the Mann-Whitney U statistic."""
    counts = _u_counts(n1, n2)
    total = math.comb(n1 + n2, n1)
    k = int(round(u))
    lower = sum(counts[: k + 1])
    upper = sum(counts[k:])
    return min(1.0, 2.0 * min(lower, upper) / total)


def mann_whitney_u(a, b, method="auto") -> TwoSampleResult:
    """Two-sided Mann-Whitney U test; U is reported for sample ``a``.

    With ``method="auto"`` the exact null distribution is used when
    ``n1 + n2 <= 12`` and there are no ties, otherwise the normal
    approximation with tie and continuity correction. ``"exact"`` and
    ``"asymptotic"`` force one path (exact refuses tied data).
    """
    if method not in ("auto", "exact", "asymptotic"):
        raise ValueError(f"unknown method {method!r}")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = a.size, b.size
    if n1 < 1 or n2 < 1:
        raise ValueError("both samples need at least one observation")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    _, tie_sizes = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_sizes > 1))
    if method == "exact" and has_ties:
        raise ValueError("exact Mann-Whitney distribution requires untied data")
    if method == "auto":
        exact = n <= EXACT_MWU_MAX_N and not has_ties
    else:
        exact = method == "exact"
    if exact:
        p = mwu_exact_p(u, n1, n2)
    else:
        mu = n1 * n2 / 2.0
        tie_term = float(np.sum(tie_sizes.astype(np.float64) ** 3 - tie_sizes))
        var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
        if var <= 0:
            p = 1.0
        else:
            z = (abs(u - mu) - 0.5) / math.sqrt(var)
            p = 1.0 if z <= 0 else min(1.0, normal_two_sided(z))
    _, m1, q11, q13 = descriptives(a)
    _, m2, q21, q23 = descriptives(b)
    return TwoSampleResult("mann_whitney_u", u, p, n1, n2, m1, m2,
                           (q11, q13), (q21, q23), exact)
