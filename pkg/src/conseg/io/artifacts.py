"""JSON persistence for calibration and UR-threshold models."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

from ..clustering import UrThresholdModel
from ..conformal import CalibrationModel
from ..normalization import NormalizationParams

CALIBRATION_VERSION = "conseg-calibration/1"
THRESHOLD_VERSION = "conseg-ur-threshold/1"


class ModelFileError(ValueError):
    pass


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load(path, version):
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"model file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc})") from exc
    if data.get("version") != version:
        raise ModelFileError(
            f"{path}: unrecognized version {data.get('version')!r}, expected {version!r}"
        )
    return data


def calibration_to_dict(norm: NormalizationParams, model: CalibrationModel | None = None,
                        *, alpha=None, created_utc=None) -> dict:
    """Serializable form; ``model=None`` gives a draft holding only the BMOT."""
    return {
        "version": CALIBRATION_VERSION,
        "alpha": model.alpha if model else alpha,
        "bmot": norm.bmot,
        "epsilon": norm.epsilon,
        "norm_range_mode": norm.range_mode,
        "y_min": norm.y_min,
        "y_max": norm.y_max,
        "ncst": model.ncst if model else None,
        "n_calibration_voxels": model.n_cal if model else None,
        "provenance": list(model.provenance) if model else [],
        "created_utc": created_utc or utc_now(),
    }


def write_calibration(path, norm, model=None, *, alpha=None, created_utc=None):
    _dump(calibration_to_dict(norm, model, alpha=alpha, created_utc=created_utc), path)


def read_norm_params(path) -> NormalizationParams:
    """Normalization parameters from a draft or complete calibration file."""
    d = _load(path, CALIBRATION_VERSION)
    try:
        return NormalizationParams(d["bmot"], d["epsilon"], d["norm_range_mode"],
                                   d["y_min"], d["y_max"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: invalid normalization fields ({exc})") from exc


def read_calibration(path) -> CalibrationModel:
    d = _load(path, CALIBRATION_VERSION)
    if d.get("ncst") is None:
        raise ModelFileError(f"{path}: draft model has no ncst; run calibrate first")
    norm = read_norm_params(path)
    try:
        return CalibrationModel(d["alpha"], d["ncst"], d["n_calibration_voxels"], norm,
                                list(d.get("provenance", [])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: invalid calibration fields ({exc})") from exc


def read_created_utc(path) -> str:
    return _load(path, CALIBRATION_VERSION).get("created_utc", "")


def write_threshold(path, model: UrThresholdModel):
    _dump({
        "version": THRESHOLD_VERSION,
        "centroid_low": model.centroid_low,
        "centroid_high": model.centroid_high,
        "threshold": model.threshold,
        "n_points": model.n_points,
        "source_cohort": model.source_cohort,
    }, path)


def read_threshold(path) -> UrThresholdModel:
    d = _load(path, THRESHOLD_VERSION)
    try:
        return UrThresholdModel(d["centroid_low"], d["centroid_high"], d["threshold"],
                                d["n_points"], d.get("source_cohort", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: invalid threshold fields ({exc})") from exc
