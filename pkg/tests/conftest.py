import numpy as np
import pytest

from conseg.volume import ConformalVolume, LabelVolume, ProbVolume, VolumeGeometry


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def prob_volume(values, dims=None):
    values = np.asarray(values, dtype=np.float64)
    if dims is None:
        return ProbVolume.from_array(values)
    return ProbVolume(VolumeGeometry(dims), values)


def label_volume(values, dims=None):
    values = np.asarray(values, dtype=np.uint8)
    if dims is None:
        return LabelVolume.from_array(values)
    return LabelVolume(VolumeGeometry(dims), values)


def conformal_volume(values, dims=None):
    values = np.asarray(values, dtype=np.uint8)
    if dims is None:
        return ConformalVolume.from_array(values)
    return ConformalVolume(VolumeGeometry(dims), values)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        line = mod.RESULTS.get(n, f"[FAIL] criterion {n:2d}: not run or did not complete")
        terminalreporter.write_line(line)
