"""Two-cluster k-means on case uncertainty ratios.

In one dimension every 2-means optimum is a contiguous split of the sorted
values, so the global optimum is found exactly by scanning all split
points with prefix sums. The case threshold is the midpoint of the two
centroids, i.e. the k-means decision boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .metrics import CaseMetrics


@dataclass(frozen=True)
class UrThresholdModel:
    centroid_low: float
    centroid_high: float
    threshold: float
    n_points: int
    source_cohort: str = ""

    def __post_init__(self):
        if not self.centroid_low <= self.threshold <= self.centroid_high:
            raise ValueError("threshold must lie between the centroids")


def best_split(sorted_x: np.ndarray) -> int:
    """Size of the low cluster minimizing within-cluster sum of squares.

    Only boundaries between distinct values are eligible. Minimizing the
    within-cluster SSE is the same as maximizing the between-cluster term
    ``n1 * n2 * (m1 - m2)**2``, which avoids cancellation.
    """
    n = sorted_x.size
    csum = np.cumsum(sorted_x)
    k = np.arange(1, n)
    m1 = csum[:-1] / k
    m2 = (csum[-1] - csum[:-1]) / (n - k)
    gain = k * (n - k) * (m2 - m1) ** 2
    gain[sorted_x[1:] == sorted_x[:-1]] = -np.inf
    return int(np.argmax(gain)) + 1


def kmeans_1d_2(urs, source_cohort: str = "") -> UrThresholdModel:
    """Exact two-cluster k-means of finite values; returns centroids and midpoint."""
    x = np.asarray(urs, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("k-means input must be finite (drop undefined URs first)")
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct values to form two clusters")
    s = np.sort(x)
    k = best_split(s)
    lo = float(s[:k].mean())
    hi = float(s[k:].mean())
    return UrThresholdModel(lo, hi, (lo + hi) / 2.0, int(x.size), source_cohort)


def is_uncertain(ur: float, threshold: float) -> bool:
    """``ur > threshold``; undefined (infinite) URs are always uncertain."""
    return math.isinf(ur) or ur > threshold


def categorize(metrics, model: UrThresholdModel) -> list:
    """Copies of ``metrics`` with ``category`` set from the UR threshold."""
    out = []
    for m in metrics:
        cat = "uncertain" if is_uncertain(m.ur, model.threshold) else "certain"
        out.append(replace(m, category=cat))
    return out


def category_counts(metrics):
    """``{category: (count, percent)}`` over categorized metrics."""
    n = len(metrics)
    table = {}
    for cat in ("uncertain", "certain"):
        c = sum(1 for m in metrics if m.category == cat)
        table[cat] = (c, 100.0 * c / n if n else 0.0)
    return table


class UncertaintyRatioThreshold(BaseEstimator):
    """Learn a certain/uncertain case threshold from calibration URs.

    ``fit`` drops undefined (infinite) URs, clusters the rest with exact
    1-D 2-means and keeps the centroid midpoint. ``predict`` returns 1 for
    uncertain cases (``ur > threshold_`` or undefined) and 0 otherwise.

    Parameters
    ----------
    source_cohort : str, default=""
        Free-text label stored on the fitted model.
    """

    def __init__(self, source_cohort=""):
        self.source_cohort = source_cohort

    def fit(self, X, y=None):
        urs = _as_urs(X)
        self.model_ = kmeans_1d_2(urs[np.isfinite(urs)], self.source_cohort)
        self.threshold_ = self.model_.threshold
        self.cluster_centers_ = np.array(
            [self.model_.centroid_low, self.model_.centroid_high]
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        urs = _as_urs(X)
        return (np.isinf(urs) | (urs > self.threshold_)).astype(np.int64)


def _as_urs(X) -> np.ndarray:
    if len(X) and isinstance(X[0], CaseMetrics):
        return np.array([m.ur for m in X], dtype=np.float64)
    return np.asarray(X, dtype=np.float64).ravel()
