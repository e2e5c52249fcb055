"""Optimal-threshold selection and prediction normalization.

The base model's optimal threshold (BMOT) is found by a 1% grid sweep of
mean per-case Dice. Normalization then remaps probabilities piecewise
linearly so the BMOT lands exactly on 0.5::

    p >= pivot:  (p - pivot) / (2 (y_max - pivot)) + 0.5
    p <  pivot:  (p - pivot) / (2 (pivot - y_min)) + 0.5

A conformal band ``[1 - q, q]`` around 0.5 then always straddles the
model's own decision boundary, so certain voxels never contradict it.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import (
    check_consistent_cases,
    check_labels,
    check_probabilities,
    restore,
)
from .volume import ProbVolume

log = logging.getLogger(__name__)

RANGE_MODES = ("theoretical", "empirical_per_volume", "empirical_global")
SWEEP_THRESHOLDS = np.arange(101) / 100.0


def effective_pivot(bmot: float, epsilon: float) -> float:
    """BMOT nudged off the ends of [0, 1] so neither branch is empty."""
    if bmot >= 1.0:
        return bmot - epsilon
    if bmot <= 0.0:
        return bmot + epsilon
    return bmot


@dataclass(frozen=True)
class NormalizationParams:
    bmot: float
    epsilon: float = 1e-6
    range_mode: str = "theoretical"
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.bmot <= 1.0:
            raise ValueError(f"bmot must be in [0, 1], got {self.bmot}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.range_mode not in RANGE_MODES:
            raise ValueError(
                f"range_mode must be one of {RANGE_MODES}, got {self.range_mode!r}"
            )
        # keep the pivot inside the range
        object.__setattr__(self, "y_min", float(min(self.y_min, self.pivot)))
        object.__setattr__(self, "y_max", float(max(self.y_max, self.pivot)))

    @property
    def pivot(self) -> float:
        return effective_pivot(self.bmot, self.epsilon)

    @property
    def upper_span(self) -> float:
        return max(self.y_max - self.pivot, self.epsilon)

    @property
    def lower_span(self) -> float:
        return max(self.pivot - self.y_min, self.epsilon)

    def for_values(self, values) -> "NormalizationParams":
        """Params with y_min/y_max taken from ``values`` (per-volume mode)."""
        values = np.asarray(values)
        return replace(self, y_min=float(values.min()), y_max=float(values.max()))


def normalize(values, params: NormalizationParams) -> np.ndarray:
    """Map raw probabilities so that the pivot goes to exactly 0.5.

    Values outside ``[y_min, y_max]`` are clamped (with a warning) before
    mapping. The map is strictly increasing; ``y_min -> 0``,
    ``pivot -> 0.5``, ``y_max -> 1``.
    """
    p = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError("cannot normalize non-finite probabilities")
    if params.range_mode == "empirical_per_volume" and p.size:
        params = params.for_values(p)
    lo, hi = params.y_min, params.y_max
    if p.size and (p.min() < lo or p.max() > hi):
        warnings.warn(
            f"probabilities outside [{lo}, {hi}] clamped before normalization",
            RuntimeWarning,
            stacklevel=2,
        )
        p = np.clip(p, lo, hi)
    pivot = params.pivot
    d = p - pivot
    out = np.where(
        d >= 0.0,
        d / (2.0 * params.upper_span),
        d / (2.0 * params.lower_span),
    ) + 0.5
    return np.clip(out, 0.0, 1.0)


def denormalize_band(params: NormalizationParams, low: float, high: float):
    """Raw-probability interval corresponding to a normalized interval."""
    if not 0.0 <= low <= high <= 1.0:
        raise ValueError(f"need 0 <= low <= high <= 1, got ({low}, {high})")
    return _inverse(params, low), _inverse(params, high)


def _inverse(params, q):
    d = q - 0.5
    span = params.upper_span if d >= 0 else params.lower_span
    return params.pivot + 2.0 * d * span


def case_dice_curve(p, labels, thresholds):
    """Dice of ``p > t`` against ``labels`` for every t, via one sort."""
    p = p.ravel()
    lab = labels.ravel().astype(bool)
    n_truth = int(np.count_nonzero(lab))
    all_sorted = np.sort(p)
    pos_sorted = np.sort(p[lab])
    n_pred = p.size - np.searchsorted(all_sorted, thresholds, side="right")
    n_hit = pos_sorted.size - np.searchsorted(pos_sorted, thresholds, side="right")
    denom = n_pred + n_truth
    with np.errstate(invalid="ignore", divide="ignore"):
        curve = np.where(denom == 0, 1.0, 2.0 * n_hit / denom)
    return curve


def sweep_bmot(probs, labels, thresholds=SWEEP_THRESHOLDS):
    """Grid-search the threshold maximizing mean per-case Dice.

    Each case is binarized as ``p > t``. Ties resolve to the smallest
    maximizing threshold.

    Returns
    -------
    bmot : float
    curve : list of (threshold, mean_dsc)
    """
    P, _ = check_probabilities(probs, name="probs")
    Y, _ = check_labels(labels, name="labels")
    if not P:
        raise ValueError("sweep_bmot needs at least one case")
    check_consistent_cases(P, Y, names=("probs", "labels"))
    thresholds = np.asarray(thresholds, dtype=np.float64)
    total = np.zeros(thresholds.size)
    # fixed case order keeps the float sum reproducible
    for p, y in zip(P, Y):
        total += case_dice_curve(p, y, thresholds)
    mean = total / len(P)
    best = int(np.argmax(mean))
    return float(thresholds[best]), [(float(t), float(m)) for t, m in zip(thresholds, mean)]


class PredictionNormalizer(TransformerMixin, BaseEstimator):
    """Remap probability volumes so the base model's threshold becomes 0.5.

    Parameters
    ----------
    bmot : float or None, default=None
        Base-model optimal threshold. When None it is chosen in ``fit`` by
        sweeping thresholds 0.00, 0.01, ..., 1.00 against ``y``.
    epsilon : float, default=1e-6
        Offset applied when the threshold sits at 0 or 1, and floor on both
        branch denominators.
    range_mode : {"theoretical", "empirical_per_volume", "empirical_global"}
        Where ``y_min``/``y_max`` come from: fixed 0/1, each transformed
        volume's own extremes, or the extremes seen during ``fit``.

    Attributes
    ----------
    bmot_ : float
    curve_ : list of (threshold, mean_dsc) or None
    params_ : NormalizationParams
    """

    def __init__(self, bmot=None, epsilon=1e-6, range_mode="theoretical"):
        self.bmot = bmot
        self.epsilon = epsilon
        self.range_mode = range_mode

    def fit(self, X, y=None):
        P, _ = check_probabilities(X)
        if self.bmot is None:
            if y is None:
                raise ValueError("y is required to sweep for the optimal threshold")
            self.bmot_, self.curve_ = sweep_bmot(P, y)
            log.info("selected bmot %.2f", self.bmot_)
        else:
            self.bmot_, self.curve_ = float(self.bmot), None
        y_min, y_max = 0.0, 1.0
        if self.range_mode == "empirical_global":
            y_min = min(float(p.min()) for p in P)
            y_max = max(float(p.max()) for p in P)
        self.params_ = NormalizationParams(
            self.bmot_, self.epsilon, self.range_mode, y_min, y_max
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        P, _ = check_probabilities(X)
        return restore(X, [normalize(p, self.params_) for p in P], ProbVolume)

    def inverse_band(self, low, high):
        """Raw-probability band matching a normalized ``[low, high]``."""
        check_is_fitted(self, "params_")
        return denormalize_band(self.params_, low, high)
