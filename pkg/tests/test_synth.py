import numpy as np
import pytest

from conseg.conformal import ConformalSegmenter
from conseg.metrics import dice
from conseg.stats import mann_whitney_u, spearman
from conseg.synth import PhiloxStream, SynthConfig, generate_case, generate_iid_voxels

_M0, _M1 = 0xD2E7470EE14C6C93, 0xCA5A826395121157
_W0, _W1 = 0x9E3779B97F4A7C15, 0xBB67AE8584CAA73B
_MASK = (1 << 64) - 1


def philox4x64_10(ctr, key):
    """Reference Philox-4x64-10 block function in plain integers."""
    c, k = list(ctr), list(key)
    for r in range(10):
        if r:
            k = [(k[0] + _W0) & _MASK, (k[1] + _W1) & _MASK]
        p0, p1 = _M0 * c[0], _M1 * c[2]
        c = [(p1 >> 64) ^ c[1] ^ k[0], p1 & _MASK, (p0 >> 64) ^ c[3] ^ k[1], p0 & _MASK]
    return c


def test_reference_block_known_answers():
    assert philox4x64_10([0] * 4, [0, 0]) == [
        0x16554D9ECA36314C, 0xDB20FE9D672D0FDC, 0xD7E772CEE186176B, 0x7E68B68AEC7BA23B]
    assert philox4x64_10([_MASK] * 4, [_MASK] * 2) == [
        0x87B092C3013FE90B, 0x438C3C67BE8D0224, 0x9CC7D7C69CD777B6, 0xA09CAEBF594F0BA0]


@pytest.mark.parametrize("seed, stream", [(0, 0), (5, 9), (2**64 - 1, 1 << 63)])
def test_stream_matches_reference(seed, stream):
    raw = [int(v) for v in PhiloxStream(seed, stream).raw(12)]
    expected = []
    for ctr in (1, 2, 3):
        expected += philox4x64_10([ctr, 0, 0, 0], [seed, stream])
    assert raw == expected


def test_uniform_open_interval_and_mapping():
    s = PhiloxStream(3, 4)
    raw = PhiloxStream(3, 4).raw(1000)
    u = s.uniform(1000)
    np.testing.assert_array_equal(u, ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53)
    assert u.min() > 0 and u.max() < 1


def test_case_determinism():
    cfg = SynthConfig(seed=4, dims=(12, 12, 12))
    a = generate_case(cfg, 3)
    b = generate_case(cfg, 3)
    np.testing.assert_array_equal(a[0].values, b[0].values)
    np.testing.assert_array_equal(a[1].values, b[1].values)
    assert a[2] == b[2]
    c = generate_case(cfg, 4)
    assert not np.array_equal(a[0].values, c[0].values)


def test_probabilities_float32_exact():
    p = generate_case(SynthConfig(dims=(10, 10, 10)), 0)[0].values
    np.testing.assert_array_equal(p.astype(np.float32).astype(np.float64), p)


def test_noiseless_limit():
    cfg = SynthConfig(seed=1, dims=(20, 20, 20), noise_sigma_range=(0, 0), sharpness=50.0)
    for i in range(3):
        pv, lv, sigma = generate_case(cfg, i)
        assert sigma == 0.0
        assert dice(pv.values > 0.5, lv.values) > 0.99


def test_sigma_anticorrelates_with_dsc():
    cfg = SynthConfig(seed=0, dims=(24, 24, 24))
    sig, dsc = [], []
    for i in range(50):
        pv, lv, s = generate_case(cfg, i)
        sig.append(s)
        dsc.append(dice(pv.values > 0.5, lv.values))
    assert spearman(sig, dsc).r < -0.5


def test_iid_validation_and_seeds():
    with pytest.raises(ValueError):
        generate_iid_voxels(SynthConfig(), 0)
    a, la = generate_iid_voxels(SynthConfig(seed=1), 100)
    b, lb = generate_iid_voxels(SynthConfig(seed=2), 100)
    assert not np.array_equal(a, b)
    a2, _ = generate_iid_voxels(SynthConfig(seed=1), 100)
    np.testing.assert_array_equal(a, a2)
    c, _ = generate_iid_voxels(SynthConfig(seed=1), 100, stream=1)
    assert not np.array_equal(a, c)


def test_iid_streams_disjoint_from_case_streams():
    cfg = SynthConfig(seed=9, dims=(8, 8, 8))
    case = generate_case(cfg, 0)[0].values
    iid, _ = generate_iid_voxels(cfg, 64)
    assert not np.isin(iid, case.ravel()).any()


def test_iid_mixture_moments():
    p, lab = generate_iid_voxels(SynthConfig(seed=3), 200_000)
    assert abs(lab.mean() - 0.3) < 0.005
    assert p[lab == 1].mean() > 0.7 and p[lab == 0].mean() < 0.3


def test_permuting_pool_leaves_coverage_distribution():
    cfg = SynthConfig(seed=21)
    perm_rng = np.random.default_rng(0)
    plain, permuted = [], []
    n = 1000
    for rep in range(200):
        p, lab = generate_iid_voxels(cfg, 2 * n, stream=rep)
        for out, order in ((plain, np.arange(2 * n)), (permuted, perm_rng.permutation(2 * n))):
            pp, ll = p[order], lab[order]
            seg = ConformalSegmenter(alpha=0.1).fit(pp[:n], ll[:n])
            out.append(seg.score(pp[n:], ll[n:]))
    assert mann_whitney_u(plain, permuted).p_value > 0.01
    assert abs(np.mean(plain) - np.mean(permuted)) < 0.005


@pytest.mark.parametrize("kw", [{"dims": (4, 4, 4)}, {"noise_sigma_range": (2, 1)},
                                {"blob_radius_range": (0, 3)}, {"sharpness": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)
