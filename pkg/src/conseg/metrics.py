"""Per-case segmentation metrics: Dice overlap and the uncertainty ratio."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .volume import ConformalVolume, Status, VoxelCounts, _Volume, count_statuses

#: UR of a case with uncertain voxels but no certain class-1 voxels. It
#: compares greater than every finite UR, which is exactly the ordering the
#: downstream categorization needs.
UNDEFINED_UR = math.inf


def _mask(m):
    a = m.values if isinstance(m, _Volume) else np.asarray(m)
    return a.astype(bool, copy=False)


def dice(pred_mask, truth) -> float:
    """Dice score ``2|A & B| / (|A| + |B|)``; two empty masks score 1.0."""
    a = _mask(pred_mask)
    b = _mask(truth)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    size_a = int(np.count_nonzero(a))
    size_b = int(np.count_nonzero(b))
    if size_a + size_b == 0:
        return 1.0
    overlap = int(np.count_nonzero(a & b))
    return 2.0 * overlap / (size_a + size_b)


def uncertainty_ratio(counts: VoxelCounts) -> float:
    """Uncertain voxels per certain class-1 voxel.

    Returns :data:`UNDEFINED_UR` when there are uncertain voxels but no
    certain class-1 voxels, and 0.0 when both counts are zero.
    """
    if counts.certain1 == 0:
        return UNDEFINED_UR if counts.uncertain > 0 else 0.0
    return counts.uncertain / counts.certain1


def conformal_to_pred_mask(cv) -> np.ndarray:
    """Binary mask of CERTAIN_1 voxels (the conformal positive prediction)."""
    statuses = cv.values if isinstance(cv, ConformalVolume) else np.asarray(cv)
    return (statuses == Status.CERTAIN_1).astype(np.uint8)


def is_undefined(ur: float) -> bool:
    return math.isinf(ur)


@dataclass
class CaseMetrics:
    case_id: str
    dsc: Optional[float]
    ur: float
    counts: VoxelCounts
    category: Optional[str] = None
    split: str = "test"
    ref_dsc: Optional[float] = None

    def __post_init__(self):
        if self.dsc is not None and not 0.0 <= self.dsc <= 1.0:
            raise ValueError(f"dsc must be in [0, 1], got {self.dsc}")
        if not self.ur >= 0:
            raise ValueError(f"ur must be non-negative, got {self.ur}")
        if self.category not in (None, "certain", "uncertain"):
            raise ValueError(f"unknown category {self.category!r}")


def case_metrics(case_id, cv, labels=None, *, split="test", ref_seg=None) -> CaseMetrics:
    """Counts, UR and (when labels exist) DSC of the certain class-1 mask."""
    counts = count_statuses(cv)
    dsc = ref = None
    if labels is not None:
        dsc = dice(conformal_to_pred_mask(cv), labels)
        if ref_seg is not None:
            ref = dice(ref_seg, labels)
    return CaseMetrics(case_id, dsc, uncertainty_ratio(counts), counts,
                       split=split, ref_dsc=ref)

