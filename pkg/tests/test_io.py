import json
import struct

import numpy as np
import pytest

from conseg import io as vio
from conseg.clustering import UrThresholdModel
from conseg.conformal import CalibrationModel
from conseg.io.nifti import NiftiFormatError, UnsupportedDatatypeError, read_nifti, write_nifti
from conseg.normalization import NormalizationParams
from conseg.volume import ConformalVolume, VolumeGeometry

nib = pytest.importorskip("nibabel")


def _hand_header(dims, datatype, bitpix, slope=1.0, inter=0.0, magic=b"n+1\x00"):
    """348-byte NIfTI-1 header assembled field by field at standard offsets."""
    h = bytearray(348)
    struct.pack_into("<i", h, 0, 348)
    struct.pack_into("<8h", h, 40, 3, *dims, 1, 1, 1, 1)
    struct.pack_into("<h", h, 70, datatype)
    struct.pack_into("<h", h, 72, bitpix)
    struct.pack_into("<8f", h, 76, 1.0, 1.0, 1.0, 1.0, 0, 0, 0, 0)
    struct.pack_into("<f", h, 108, 352.0)
    struct.pack_into("<2f", h, 112, slope, inter)
    h[344:348] = magic
    return bytes(h)


def test_float32_writer_byte_layout(tmp_path):
    path = tmp_path / "v.nii"
    write_nifti(VolumeGeometry((2, 2, 2)), np.arange(8, dtype=np.float32), "float32", path)
    raw = path.read_bytes()
    assert len(raw) == 352 + 32
    assert struct.unpack_from("<i", raw, 0)[0] == 348
    assert struct.unpack_from("<8h", raw, 40) == (3, 2, 2, 2, 1, 1, 1, 1)
    assert struct.unpack_from("<2h", raw, 70) == (16, 32)
    assert struct.unpack_from("<3f", raw, 108) == (352.0, 1.0, 0.0)
    assert raw[344:348] == b"n+1\x00"
    assert raw[352:] == struct.pack("<8f", *range(8))
    g, v, tag = read_nifti(path)
    assert g.dims == (2, 2, 2) and tag == "float32"
    assert v.tolist() == list(range(8))


def test_reads_hand_built_scaled_int16(tmp_path):
    path = tmp_path / "s.nii"
    path.write_bytes(_hand_header((2, 1, 1), 4, 16, 0.5, 1.0) + bytes(4) + struct.pack("<2h", 4, -6))
    _, v, tag = read_nifti(path)
    assert tag == "int16"
    assert v.tolist() == [3.0, -2.0]


def test_zero_slope_means_unscaled(tmp_path):
    path = tmp_path / "z.nii"
    path.write_bytes(_hand_header((2, 1, 1), 2, 8, 0.0, 5.0) + bytes(4) + bytes([7, 9]))
    _, v, _ = read_nifti(path)
    assert v.tolist() == [7, 9] and v.dtype == np.uint8


def test_bad_magic(tmp_path):
    path = tmp_path / "m.nii"
    path.write_bytes(_hand_header((1, 1, 1), 2, 8, magic=b"abc\x00") + bytes(5))
    with pytest.raises(NiftiFormatError, match="magic"):
        read_nifti(path)


def test_big_endian_rejected(tmp_path):
    h = bytearray(_hand_header((1, 1, 1), 2, 8))
    h[0:4] = struct.pack(">i", 348)
    path = tmp_path / "be.nii"
    path.write_bytes(bytes(h) + bytes(5))
    with pytest.raises(NiftiFormatError, match="big-endian"):
        read_nifti(path)


def test_swapped_dim0_rejected(tmp_path):
    h = bytearray(_hand_header((1, 1, 1), 2, 8))
    struct.pack_into(">h", h, 40, 3)  # dim[0] read as 768
    path = tmp_path / "sw.nii"
    path.write_bytes(bytes(h) + bytes(5))
    with pytest.raises(NiftiFormatError, match="dim"):
        read_nifti(path)


def test_gzip_and_truncation_rejected(tmp_path):
    gz = tmp_path / "g.nii"
    gz.write_bytes(b"\x1f\x8b" + bytes(400))
    with pytest.raises(NiftiFormatError):
        read_nifti(gz)
    tr = tmp_path / "t.nii"
    tr.write_bytes(_hand_header((4, 4, 4), 16, 32) + bytes(4) + bytes(10))
    with pytest.raises(NiftiFormatError, match="truncated"):
        read_nifti(tr)


def test_unsupported_datatype(tmp_path):
    path = tmp_path / "u.nii"
    path.write_bytes(_hand_header((1, 1, 1), 512, 16) + bytes(6))
    with pytest.raises(UnsupportedDatatypeError):
        read_nifti(path)
    with pytest.raises(UnsupportedDatatypeError):
        write_nifti(VolumeGeometry((1, 1, 1)), [0], "int32", path)


def test_zero_voxel_geometry_rejected():
    with pytest.raises(ValueError):
        VolumeGeometry((0, 3, 3))


def test_pair_format_ni1(tmp_path):
    (tmp_path / "p.hdr").write_bytes(_hand_header((3, 1, 1), 2, 8, magic=b"ni1\x00"))
    img = bytearray(355)
    img[352:355] = bytes([1, 0, 1])
    (tmp_path / "p.img").write_bytes(bytes(img))
    _, v, _ = read_nifti(tmp_path / "p.hdr")
    assert v.tolist() == [1, 0, 1]


@pytest.mark.parametrize("datatype", ["float32", "uint8"])
def test_random_round_trips_bit_exact(tmp_path, rng, datatype):
    for i in range(100):
        dims = tuple(int(d) for d in rng.integers(1, 9, size=3))
        g = VolumeGeometry(dims, tuple(rng.uniform(0.5, 2.0, 3)))
        if datatype == "float32":
            vals = rng.standard_normal(g.n_voxels).astype(np.float32)
        else:
            vals = rng.integers(0, 256, g.n_voxels).astype(np.uint8)
        path = tmp_path / f"{datatype}_{i}.nii"
        write_nifti(g, vals, datatype, path)
        g2, v2, _ = read_nifti(path)
        assert g2.dims == dims
        assert v2.dtype == vals.dtype and v2.tobytes() == vals.tobytes()


def test_scaled_int16_within_one_step(tmp_path, rng):
    g = VolumeGeometry((5, 4, 3))
    vals = rng.uniform(-100, 100, g.n_voxels)
    path = tmp_path / "q.nii"
    write_nifti(g, vals, "int16", path, scl_slope=0.01, scl_inter=-3.0)
    _, back, _ = read_nifti(path)
    assert np.max(np.abs(back - vals)) <= 0.01 * 0.5 + 1e-9


def test_nibabel_reads_our_files(tmp_path, rng):
    g = VolumeGeometry((4, 3, 2), (0.5, 1.0, 2.0))
    vals = rng.random(g.n_voxels).astype(np.float32)
    path = tmp_path / "n.nii"
    write_nifti(g, vals, "float32", path)
    img = nib.load(str(path))
    assert img.shape == (4, 3, 2)
    np.testing.assert_array_equal(img.header.get_zooms(), (0.5, 1.0, 2.0))
    np.testing.assert_array_equal(np.asarray(img.dataobj).ravel(order="F"), vals)


def test_we_read_nibabel_files(tmp_path, rng):
    data = rng.integers(-300, 300, (3, 4, 5)).astype(np.int16)
    img = nib.Nifti1Image(data, np.diag([1.5, 1.5, 3.0, 1.0]))
    img.header.set_slope_inter(0.25, 2.0)
    path = tmp_path / "nb.nii"
    nib.save(img, str(path))
    g, v, tag = read_nifti(path)
    assert g.dims == (3, 4, 5) and g.voxel_spacing == (1.5, 1.5, 3.0) and tag == "int16"
    np.testing.assert_allclose(v, data.ravel(order="F") * 0.25 + 2.0, rtol=0, atol=0)


def test_conformal_volume_round_trip(tmp_path, rng):
    cv = ConformalVolume(VolumeGeometry((3, 3, 3)), rng.integers(0, 3, 27))
    vio.save_conformal_volume(cv, tmp_path / "s.nii")
    back = vio.load_conformal_volume(tmp_path / "s.nii")
    np.testing.assert_array_equal(back.values, cv.values)


def test_geometry_mismatch_on_write(tmp_path):
    with pytest.raises(vio.NiftiGeometryError):
        write_nifti(VolumeGeometry((2, 2, 2)), np.zeros(7), "float32", tmp_path / "x.nii")


def _touch(p):
    p.write_bytes(b"")
    return p


def test_manifest_parse_and_round_trip(tmp_path):
    for n in ("a_p.nii", "a_l.nii", "b_p.nii", "ref.nii", "m.nii"):
        _touch(tmp_path / n)
    text = ("# comment\n"
            "a\ttest\ta_p.nii\ta_l.nii\n"
            "\n"
            "b\tcalibration\tb_p.nii\t-\tref.nii\tm.nii\n")
    (tmp_path / "m.tsv").write_text(text)
    m = vio.read_manifest(tmp_path / "m.tsv")
    assert len(m) == 2
    a, b = m.entries
    assert a.label_path == tmp_path / "a_l.nii" and a.ref_seg_path is None
    assert b.label_path is None and b.mask_path == tmp_path / "m.nii"
    assert [e.case_id for e in m.select("test")] == ["a"]
    vio.write_manifest(m, tmp_path / "m2.tsv")
    assert vio.read_manifest(tmp_path / "m2.tsv").entries == m.entries


def test_manifest_duplicate_and_unknown_split(tmp_path):
    _touch(tmp_path / "p.nii")
    (tmp_path / "d.tsv").write_text("a\ttest\tp.nii\t-\na\ttest\tp.nii\t-\n")
    with pytest.raises(vio.ManifestError, match="duplicate"):
        vio.read_manifest(tmp_path / "d.tsv")
    (tmp_path / "h.tsv").write_text("a\tholdout\tp.nii\t-\n")
    with pytest.raises(vio.ManifestError, match="train, validation, calibration, test"):
        vio.read_manifest(tmp_path / "h.tsv")


def test_manifest_missing_file_and_bad_columns(tmp_path):
    (tmp_path / "x.tsv").write_text("a\ttest\tnope.nii\t-\n")
    with pytest.raises(vio.ManifestError, match="not found"):
        vio.read_manifest(tmp_path / "x.tsv")
    assert len(vio.read_manifest(tmp_path / "x.tsv", check_files=False)) == 1
    (tmp_path / "y.tsv").write_text("a\ttest\n")
    with pytest.raises(vio.ManifestError, match="fields"):
        vio.read_manifest(tmp_path / "y.tsv")


def test_calibration_file_round_trip(tmp_path):
    norm = NormalizationParams(0.37, 1e-6, "empirical_global", 0.0123, 0.987654321)
    model = CalibrationModel(0.002, 0.8874123456789, 123456, norm, ["c1", "c2"])
    path = tmp_path / "model.json"
    vio.write_calibration(path, norm, model, created_utc="2020-01-01T00:00:00Z")
    back = vio.read_calibration(path)
    assert back == model
    assert vio.read_norm_params(path) == norm
    assert json.loads(path.read_text())["created_utc"] == "2020-01-01T00:00:00Z"


def test_draft_calibration_file(tmp_path):
    path = tmp_path / "draft.json"
    vio.write_calibration(path, NormalizationParams(0.5), alpha=0.1)
    assert vio.read_norm_params(path).bmot == 0.5
    with pytest.raises(vio.ModelFileError, match="draft"):
        vio.read_calibration(path)


def test_model_file_errors(tmp_path):
    with pytest.raises(vio.ModelFileError, match="not found"):
        vio.read_calibration(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(vio.ModelFileError, match="JSON"):
        vio.read_calibration(bad)
    bad.write_text(json.dumps({"version": "other"}))
    with pytest.raises(vio.ModelFileError, match="version"):
        vio.read_calibration(bad)
    bad.write_text(json.dumps({"version": "conseg-calibration/1", "bmot": 2.0, "epsilon": 1e-6,
                               "norm_range_mode": "theoretical", "y_min": 0, "y_max": 1}))
    with pytest.raises(vio.ModelFileError):
        vio.read_norm_params(bad)


def test_threshold_file_round_trip(tmp_path):
    m = UrThresholdModel(0.02, 0.55, 0.285, 5, "cal")
    vio.write_threshold(tmp_path / "t.json", m)
    assert vio.read_threshold(tmp_path / "t.json") == m
