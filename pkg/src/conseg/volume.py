"""Volume containers shared by every stage of the pipeline.

Volumes hold a 3-D numpy array of shape ``(dx, dy, dz)``. The canonical
linear order is x-fastest (Fortran order), which is also the on-disk order
of NIfTI-1; use :meth:`flat` whenever a 1-D view is needed so all modules
agree on voxel indexing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "Status",
    "VolumeGeometry",
    "ProbVolume",
    "LabelVolume",
    "ConformalVolume",
    "VoxelCounts",
    "geometry_match",
    "count_statuses",
]

_MAX_VOXELS = 2**64 - 1


class Status(enum.IntEnum):
    """Per-voxel conformal status; the values are the uint8 on-disk codes."""

    CERTAIN_0 = 0
    CERTAIN_1 = 1
    UNCERTAIN = 2


@dataclass(frozen=True)
class VolumeGeometry:
    dims: tuple[int, int, int]
    voxel_spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.voxel_spacing)
        if len(dims) != 3 or len(spacing) != 3:
            raise ValueError("geometry needs exactly three dims and three spacings")
        if any(d < 1 for d in dims):
            raise ValueError(f"all dims must be >= 1, got {dims}")
        if not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ValueError(f"voxel spacing must be positive, got {spacing}")
        if dims[0] * dims[1] * dims[2] > _MAX_VOXELS:
            raise ValueError("voxel count overflows a 64-bit count")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_spacing", spacing)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]


def _frozen_array(values, dtype, dims) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.ndim == 1:
        if arr.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(
                f"value count {arr.size} does not match geometry {dims}"
            )
        arr = arr.reshape(dims, order="F")
    elif arr.shape != tuple(dims):
        raise ValueError(f"array shape {arr.shape} does not match geometry {dims}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class _Volume:
    geometry: VolumeGeometry
    values: np.ndarray = field(repr=False)

    _dtype = np.float64

    def __post_init__(self):
        object.__setattr__(
            self, "values", _frozen_array(self.values, self._dtype, self.geometry.dims)
        )
        self._check()

    def _check(self):
        pass

    @classmethod
    def from_array(cls, array, voxel_spacing=(1.0, 1.0, 1.0)):
        """Wrap a 3-D array, taking the geometry from its shape."""
        array = np.asarray(array)
        if array.ndim != 3:
            raise ValueError(f"expected a 3-D array, got shape {array.shape}")
        return cls(VolumeGeometry(array.shape, voxel_spacing), array)

    def flat(self) -> np.ndarray:
        """Values in canonical x-fastest linear order."""
        return self.values.ravel(order="F")

    @property
    def shape(self):
        return self.values.shape


class ProbVolume(_Volume):
    """Per-voxel class-1 probabilities, stored as float64."""

    def _check(self):
        v = self.values
        if not np.all(np.isfinite(v)):
            raise ValueError("probability volume contains non-finite values")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")


class LabelVolume(_Volume):
    _dtype = np.uint8

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.size and not np.all(np.isin(raw, (0, 1))):
            raise ValueError("labels must be binary {0, 1}")
        super().__post_init__()


class ConformalVolume(_Volume):
    """Per-voxel :class:`Status` codes (uint8)."""

    _dtype = np.uint8

    def _check(self):
        if np.any(self.values > Status.UNCERTAIN):
            raise ValueError("status codes must be 0, 1 or 2")


class VoxelCounts(NamedTuple):
    certain0: int
    certain1: int
    uncertain: int

    @property
    def total(self) -> int:
        return self.certain0 + self.certain1 + self.uncertain


def geometry_match(a, b) -> bool:
    """True iff both volumes have identical dims; spacing is ignored."""
    return tuple(a.geometry.dims) == tuple(b.geometry.dims)


def count_statuses(cv) -> VoxelCounts:
    """Exact tally of each status in a conformal volume (or raw status array)."""
    statuses = cv.values if isinstance(cv, ConformalVolume) else np.asarray(cv)
    tally = np.bincount(statuses.ravel(), minlength=3)
    if tally.size > 3:
        raise ValueError("status codes must be 0, 1 or 2")
    return VoxelCounts(int(tally[0]), int(tally[1]), int(tally[2]))
