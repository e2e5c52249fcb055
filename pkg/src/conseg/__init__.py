"""Conformal uncertainty quantification for binary volumetric segmentation.

Typical use with probability volumes from any segmentation model::

    from conseg import PredictionNormalizer, ConformalSegmenter

    norm = PredictionNormalizer().fit(val_probs, val_labels)   # picks the threshold
    seg = ConformalSegmenter(alpha=0.002).fit(norm.transform(cal_probs), cal_labels)
    statuses = seg.predict(norm.transform(test_probs))         # 0/1 certain, 2 uncertain
"""

__version__ = "0.1.0"

from .clustering import UncertaintyRatioThreshold, UrThresholdModel, categorize, kmeans_1d_2
from .conformal import (
    CalibrationModel,
    ConformalSegmenter,
    PredictionSet,
    calibrate,
    classify,
    classify_volume,
    coverage,
    nonconformity,
    prediction_set,
    prediction_sets,
    select_ncst,
)
from .metrics import (
    UNDEFINED_UR,
    CaseMetrics,
    case_metrics,
    conformal_to_pred_mask,
    dice,
    uncertainty_ratio,
)
from .normalization import (
    NormalizationParams,
    PredictionNormalizer,
    denormalize_band,
    normalize,
    sweep_bmot,
)
from .volume import (
    ConformalVolume,
    LabelVolume,
    ProbVolume,
    Status,
    VolumeGeometry,
    VoxelCounts,
    count_statuses,
    geometry_match,
)

__all__ = [
    "CalibrationModel",
    "CaseMetrics",
    "ConformalSegmenter",
    "ConformalVolume",
    "LabelVolume",
    "NormalizationParams",
    "PredictionNormalizer",
    "PredictionSet",
    "ProbVolume",
    "Status",
    "UNDEFINED_UR",
    "UncertaintyRatioThreshold",
    "UrThresholdModel",
    "VolumeGeometry",
    "VoxelCounts",
    "calibrate",
    "case_metrics",
    "categorize",
    "classify",
    "classify_volume",
    "conformal_to_pred_mask",
    "count_statuses",
    "coverage",
    "denormalize_band",
    "dice",
    "geometry_match",
    "kmeans_1d_2",
    "nonconformity",
    "normalize",
    "prediction_set",
    "prediction_sets",
    "select_ncst",
    "sweep_bmot",
    "uncertainty_ratio",
]
