"""Minimal NIfTI-1 reader/writer for 3-D scalar volumes.

Supported: little-endian single-file ``.nii`` ("n+1") and header/image
pairs ("ni1"), datatypes uint8/int16/float32/float64, and linear scaling
through ``scl_slope``/``scl_inter``. Big-endian and gzip-compressed files
are rejected rather than converted.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..volume import VolumeGeometry

HEADER_SIZE = 348
VOX_OFFSET = 352

HEADER_DTYPE = np.dtype([
    ("sizeof_hdr", "<i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "<i4"),
    ("session_error", "<i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "<i2", (8,)),
    ("intent_p1", "<f4"),
    ("intent_p2", "<f4"),
    ("intent_p3", "<f4"),
    ("intent_code", "<i2"),
    ("datatype", "<i2"),
    ("bitpix", "<i2"),
    ("slice_start", "<i2"),
    ("pixdim", "<f4", (8,)),
    ("vox_offset", "<f4"),
    ("scl_slope", "<f4"),
    ("scl_inter", "<f4"),
    ("slice_end", "<i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "<f4"),
    ("cal_min", "<f4"),
    ("slice_duration", "<f4"),
    ("toffset", "<f4"),
    ("glmax", "<i4"),
    ("glmin", "<i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "<i2"),
    ("sform_code", "<i2"),
    ("quatern_b", "<f4"),
    ("quatern_c", "<f4"),
    ("quatern_d", "<f4"),
    ("qoffset_x", "<f4"),
    ("qoffset_y", "<f4"),
    ("qoffset_z", "<f4"),
    ("srow_x", "<f4", (4,)),
    ("srow_y", "<f4", (4,)),
    ("srow_z", "<f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
])
assert HEADER_DTYPE.itemsize == HEADER_SIZE

# NIfTI datatype code -> (tag, numpy dtype, bitpix)
DATATYPES = {
    2: ("uint8", np.dtype("<u1"), 8),
    4: ("int16", np.dtype("<i2"), 16),
    16: ("float32", np.dtype("<f4"), 32),
    64: ("float64", np.dtype("<f8"), 64),
}
CODES = {tag: code for code, (tag, _, _) in DATATYPES.items()}


class NiftiError(ValueError):
    """Base class for NIfTI read/write problems."""


class NiftiFormatError(NiftiError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"invalid NIfTI header field '{field}': {message}")


class UnsupportedDatatypeError(NiftiError):
    pass


class NiftiGeometryError(NiftiError):
    pass


def parse_header(raw: bytes) -> np.void:
    """Decode and validate a 348-byte header."""
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError("sizeof_hdr", f"file holds only {len(raw)} header bytes")
    if raw[:2] == b"\x1f\x8b":
        raise NiftiFormatError("sizeof_hdr", "gzip-compressed files are not supported")
    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE)[0]
    if int(hdr["sizeof_hdr"]) != HEADER_SIZE:
        if int.from_bytes(raw[:4], "big") == HEADER_SIZE:
            raise NiftiFormatError("sizeof_hdr", "big-endian files are not supported")
        raise NiftiFormatError("sizeof_hdr", f"expected 348, got {int(hdr['sizeof_hdr'])}")
    magic = bytes(hdr["magic"])
    if magic not in (b"n+1", b"ni1"):
        raise NiftiFormatError("magic", f"expected 'n+1' or 'ni1', got {magic!r}")
    ndim = int(hdr["dim"][0])
    if not 1 <= ndim <= 7:
        raise NiftiFormatError("dim", f"dim[0]={ndim} is outside 1..7 (byte-swapped header?)")
    return hdr


def read_nifti(path):
    """Read a 3-D volume.

    Returns
    -------
    geometry : VolumeGeometry
    values : ndarray
        1-D, x-fastest order. Native dtype, or float64 when scaling applies.
    datatype : str
        One of ``uint8``, ``int16``, ``float32``, ``float64``.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    hdr = parse_header(raw)
    code = int(hdr["datatype"])
    if code not in DATATYPES:
        raise UnsupportedDatatypeError(f"{path}: unsupported NIfTI datatype code {code}")
    tag, dtype, bitpix = DATATYPES[code]
    if int(hdr["bitpix"]) != bitpix:
        raise NiftiFormatError("bitpix", f"{int(hdr['bitpix'])} does not match datatype {tag}")
    dim = hdr["dim"]
    if int(dim[0]) != 3:
        raise NiftiGeometryError(f"{path}: expected a 3-D volume, dim[0]={int(dim[0])}")
    dims = tuple(int(d) for d in dim[1:4])
    if any(d < 1 for d in dims):
        raise NiftiFormatError("dim", f"non-positive extent in {dims}")
    spacing = tuple(abs(float(s)) or 1.0 for s in hdr["pixdim"][1:4])
    geometry = VolumeGeometry(dims, spacing)

    offset = int(hdr["vox_offset"])
    if bytes(hdr["magic"]) == b"ni1":
        with open(path.with_suffix(".img"), "rb") as fh:
            raw = fh.read()
    elif offset < HEADER_SIZE:
        raise NiftiFormatError("vox_offset", f"{offset} overlaps the header")
    nbytes = geometry.n_voxels * dtype.itemsize
    if len(raw) < offset + nbytes:
        raise NiftiFormatError("vox_offset", f"{path}: truncated image data")
    values = np.frombuffer(raw, dtype=dtype, count=geometry.n_voxels, offset=offset).copy()

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if np.isfinite(slope) and slope != 0.0 and (slope, inter) != (1.0, 0.0):
        values = values.astype(np.float64) * slope + inter
    return geometry, values, tag


def write_nifti(geometry: VolumeGeometry, values, datatype, path, *,
                scl_slope=1.0, scl_inter=0.0, description=""):
    """Write a single-file little-endian NIfTI-1 volume.

    ``values`` is a 3-D array shaped like ``geometry.dims`` or a flat array
    in x-fastest order. For integer datatypes with a non-identity scaling,
    floats are quantized as ``round((v - scl_inter) / scl_slope)``.
    """
    if datatype not in CODES:
        raise UnsupportedDatatypeError(f"cannot write datatype {datatype!r}")
    code = CODES[datatype]
    _, dtype, bitpix = DATATYPES[code]
    arr = np.asarray(values)
    if arr.ndim == 3:
        if arr.shape != geometry.dims:
            raise NiftiGeometryError(f"array shape {arr.shape} != geometry {geometry.dims}")
        arr = arr.ravel(order="F")
    if arr.size != geometry.n_voxels:
        raise NiftiGeometryError(
            f"{arr.size} values do not fill geometry {geometry.dims}"
        )
    if dtype.kind in "iu" and arr.dtype.kind == "f":
        arr = np.rint((arr.astype(np.float64) - scl_inter) / scl_slope)
        info = np.iinfo(dtype)
        if arr.size and (arr.min() < info.min or arr.max() > info.max):
            raise ValueError(f"values do not fit {datatype} at this scaling")
    data = arr.astype(dtype)

    hdr = np.zeros((), dtype=HEADER_DTYPE)
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, *geometry.dims, 1, 1, 1, 1]
    hdr["datatype"] = code
    hdr["bitpix"] = bitpix
    hdr["pixdim"] = [1.0, *geometry.voxel_spacing, 0.0, 0.0, 0.0, 0.0]
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = scl_slope
    hdr["scl_inter"] = scl_inter
    hdr["xyzt_units"] = 2  # millimeters
    hdr["descrip"] = description.encode("ascii", "replace")[:79]
    hdr["magic"] = b"n+1"

    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    try:
        with open(tmp, "wb") as fh:
            fh.write(hdr.tobytes())
            fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
            fh.write(data.tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed to write NIfTI volume {path}: {exc}") from exc
