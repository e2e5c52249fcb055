"""Volume, manifest and model-file I/O."""

import numpy as np

from ..volume import ConformalVolume, LabelVolume, ProbVolume
from .artifacts import (
    ModelFileError,
    read_calibration,
    read_norm_params,
    read_threshold,
    write_calibration,
    write_threshold,
)
from .manifest import (
    SPLITS,
    CohortManifest,
    ManifestEntry,
    ManifestError,
    read_manifest,
    write_manifest,
)
from .nifti import (
    NiftiError,
    NiftiFormatError,
    NiftiGeometryError,
    UnsupportedDatatypeError,
    read_nifti,
    write_nifti,
)


def load_prob_volume(path) -> ProbVolume:
    geometry, values, _ = read_nifti(path)
    # stored as float32 on disk, widened for arithmetic
    return ProbVolume(geometry, values.astype(np.float64))


def load_label_volume(path) -> LabelVolume:
    geometry, values, _ = read_nifti(path)
    return LabelVolume(geometry, np.rint(values).astype(np.uint8))


def save_prob_volume(pv: ProbVolume, path) -> None:
    write_nifti(pv.geometry, pv.values.astype(np.float32), "float32", path)


def save_label_volume(lv: LabelVolume, path) -> None:
    write_nifti(lv.geometry, lv.values, "uint8", path)


def save_conformal_volume(cv: ConformalVolume, path) -> None:
    """Statuses as a uint8 label map: 0 certain-0, 1 certain-1, 2 uncertain."""
    write_nifti(cv.geometry, cv.values, "uint8", path, description="conseg status")


def load_conformal_volume(path) -> ConformalVolume:
    geometry, values, _ = read_nifti(path)
    return ConformalVolume(geometry, values.astype(np.uint8))


__all__ = [
    "SPLITS",
    "CohortManifest",
    "ManifestEntry",
    "ManifestError",
    "ModelFileError",
    "NiftiError",
    "NiftiFormatError",
    "NiftiGeometryError",
    "UnsupportedDatatypeError",
    "load_conformal_volume",
    "load_label_volume",
    "load_prob_volume",
    "read_calibration",
    "read_manifest",
    "read_nifti",
    "read_norm_params",
    "read_threshold",
    "save_conformal_volume",
    "save_label_volume",
    "save_prob_volume",
    "write_calibration",
    "write_manifest",
    "write_nifti",
    "write_threshold",
]
