"""Split-conformal calibration and voxelwise prediction sets.

Every calibration voxel contributes one hinge score, ``1 - P(true class)``,
computed on normalized probabilities. The threshold (NCST) is the
``ceil((n + 1)(1 - alpha))``-th smallest pooled score, or 1.0 when that rank
exceeds ``n``. A class enters a test voxel's prediction set when its score
is ``<= ncst``; voxels whose set is empty or holds both classes are
uncertain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .normalization import NormalizationParams
from .validation import (
    check_consistent_cases,
    check_labels,
    check_probabilities,
    restore,
)
from .volume import ConformalVolume, Status


class PredictionSet(NamedTuple):
    contains0: bool
    contains1: bool

    @property
    def status(self) -> Status:
        if self.contains0 == self.contains1:
            return Status.UNCERTAIN
        return Status.CERTAIN_1 if self.contains1 else Status.CERTAIN_0


@dataclass
class CalibrationModel:
    alpha: float
    ncst: float
    n_cal: int
    norm: NormalizationParams
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 <= self.ncst <= 1.0:
            raise ValueError(f"ncst must be in [0, 1], got {self.ncst}")
        if self.n_cal < 1:
            raise ValueError("a calibration model needs at least one voxel")

    @property
    def rank(self) -> int:
        return conformal_rank(self.n_cal, self.alpha)

    @property
    def rank_overflow(self) -> bool:
        return self.rank > self.n_cal


def nonconformity(p_norm, label):
    """Hinge score ``1 - P(label)`` for normalized class-1 probabilities."""
    p = np.asarray(p_norm, dtype=np.float64)
    lab = np.asarray(label)
    out = np.where(lab == 1, 1.0 - p, p)
    return float(out) if out.ndim == 0 else out


def conformal_rank(n: int, alpha: float) -> int:
    """``ceil((n + 1)(1 - alpha))`` with alpha read as the decimal it prints as."""
    a = Fraction(repr(float(alpha)))
    return math.ceil((n + 1) * (1 - a))


def select_ncst(scores, alpha: float) -> float:
    """Conformal quantile of a pooled score array (exact selection, no sort)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    n = s.size
    if n == 0:
        raise ValueError("no calibration scores")
    k = conformal_rank(n, alpha)
    if k > n:
        return 1.0
    return float(np.partition(s, k - 1)[k - 1])


def prediction_sets(p_norm, ncst: float):
    """Vectorized set membership: returns ``(contains0, contains1)`` arrays."""
    p = np.asarray(p_norm, dtype=np.float64)
    return p <= ncst, (1.0 - p) <= ncst


def prediction_set(p_norm: float, ncst: float) -> PredictionSet:
    c0, c1 = prediction_sets(p_norm, ncst)
    return PredictionSet(bool(c0), bool(c1))


def classify(p_norm, ncst: float) -> np.ndarray:
    """Status codes (uint8) for an array of normalized probabilities."""
    c0, c1 = prediction_sets(p_norm, ncst)
    status = np.full(np.shape(c0), Status.UNCERTAIN, dtype=np.uint8)
    status[c0 & ~c1] = Status.CERTAIN_0
    status[c1 & ~c0] = Status.CERTAIN_1
    return status


def classify_volume(pv_norm, model: CalibrationModel) -> ConformalVolume:
    return ConformalVolume(pv_norm.geometry, classify(pv_norm.values, model.ncst))


def coverage(contains0, contains1, labels, mask=None) -> float:
    """Fraction of voxels whose true label lies in its prediction set."""
    c0 = np.asarray(contains0, dtype=bool)
    c1 = np.asarray(contains1, dtype=bool)
    lab = np.asarray(labels)
    if not c0.shape == c1.shape == lab.shape:
        raise ValueError("prediction sets and labels must share a shape")
    covered = np.where(lab == 1, c1, c0)
    if mask is not None:
        covered = covered[np.asarray(mask, dtype=bool)]
    if covered.size == 0:
        raise ValueError("no voxels to measure coverage on")
    return float(np.count_nonzero(covered)) / covered.size


def calibrate(cal_probs, cal_labels, alpha, norm, *, masks=None, case_ids=()):
    """Pool calibration hinge scores and select the NCST.

    ``cal_probs`` must already be normalized with ``norm``.
    """
    seg = ConformalSegmenter(alpha=alpha).fit(cal_probs, cal_labels, sample_mask=masks)
    return CalibrationModel(alpha, seg.ncst_, seg.n_calibration_voxels_, norm,
                            list(case_ids))


class ConformalSegmenter(BaseEstimator):
    """Split-conformal voxel classifier on normalized probabilities.

    Parameters
    ----------
    alpha : float, default=0.002
        Target miscoverage rate.

    Attributes
    ----------
    ncst_ : float
        Calibrated nonconformity score threshold.
    n_calibration_voxels_ : int
    rank_ : int
        Rank of ``ncst_`` within the pooled scores (may exceed the pool
        size, in which case ``ncst_`` is 1.0).

    Examples
    --------
    >>> import numpy as np
    >>> seg = ConformalSegmenter(alpha=0.5).fit(np.array([0.1, 0.2, 0.3]),
    ...                                          np.array([0, 0, 0]))
    >>> seg.ncst_
    0.2
    """

    def __init__(self, alpha=0.002):
        self.alpha = alpha

    def fit(self, X, y, sample_mask=None):
        """Calibrate from normalized probabilities ``X`` and labels ``y``.

        ``X``/``y`` are a single array or volume, or one per case. An
        optional ``sample_mask`` of the same structure restricts which
        voxels enter the pooled scores.
        """
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        P, _ = check_probabilities(X)
        Y, _ = check_labels(y)
        check_consistent_cases(P, Y)
        if not P:
            raise ValueError("empty calibration set")
        if sample_mask is not None:
            M, _ = check_labels(sample_mask, name="sample_mask")
            check_consistent_cases(P, M, names=("X", "sample_mask"))
        else:
            M = [None] * len(P)
        pooled = []
        for p, lab, m in zip(P, Y, M):
            s = nonconformity(p.ravel(), lab.ravel())
            if m is not None:
                s = s[m.ravel().astype(bool)]
            pooled.append(np.atleast_1d(s))
        scores = np.concatenate(pooled)
        if scores.size == 0:
            raise ValueError("empty calibration set")
        self.n_calibration_voxels_ = int(scores.size)
        self.rank_ = conformal_rank(scores.size, self.alpha)
        self.ncst_ = select_ncst(scores, self.alpha)
        return self

    def predict_sets(self, X):
        """``(contains0, contains1)`` boolean arrays for each case."""
        check_is_fitted(self, "ncst_")
        P, single = check_probabilities(X)
        sets = [prediction_sets(p, self.ncst_) for p in P]
        return sets[0] if single else sets

    def predict(self, X):
        """Per-voxel :class:`Status` codes, shaped like ``X``."""
        check_is_fitted(self, "ncst_")
        P, _ = check_probabilities(X)
        return restore(X, [classify(p, self.ncst_) for p in P], ConformalVolume)

    def score(self, X, y, sample_mask=None):
        """Pooled empirical coverage on ``(X, y)``."""
        check_is_fitted(self, "ncst_")
        P, _ = check_probabilities(X)
        Y, _ = check_labels(y)
        check_consistent_cases(P, Y)
        masks = [None] * len(P)
        if sample_mask is not None:
            masks, _ = check_labels(sample_mask, name="sample_mask")
        hits = total = 0
        for p, lab, m in zip(P, Y, masks):
            c0, c1 = prediction_sets(p, self.ncst_)
            covered = np.where(lab == 1, c1, c0)
            if m is not None:
                covered = covered[m.astype(bool)]
            hits += int(np.count_nonzero(covered))
            total += covered.size
        if total == 0:
            raise ValueError("no voxels to measure coverage on")
        return hits / total
