"""Input checking helpers used by the estimators.

Estimators accept either a single volume (``ProbVolume``/``LabelVolume``
or an ndarray of any shape, treated as a bag of voxels) or a sequence of
them, one entry per case. These helpers normalize both forms to a list of
float64 / uint8 arrays and report whether the caller passed a single item.
"""

from __future__ import annotations

import numpy as np

from .volume import ConformalVolume, _Volume


def _is_single(X) -> bool:
    if isinstance(X, _Volume):
        return True
    if isinstance(X, np.ndarray):
        return True
    if isinstance(X, (list, tuple)):
        if len(X) == 0:
            return False
        return not isinstance(X[0], (_Volume, np.ndarray, list, tuple))
    return True


def _raw(v):
    return v.values if isinstance(v, _Volume) else v


def as_case_list(X):
    """Return ``(cases, single)`` where ``cases`` is a list of raw items."""
    if _is_single(X):
        return [_raw(X)], True
    return [_raw(x) for x in X], False


def check_probabilities(X, *, name="X"):
    """Validate probability arrays: finite and within [0, 1]."""
    cases, single = as_case_list(X)
    out = []
    for i, c in enumerate(cases):
        a = np.asarray(c, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name}[{i}] contains non-finite values")
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise ValueError(f"{name}[{i}] has values outside [0, 1]")
        out.append(a)
    return out, single


def check_labels(y, *, name="y"):
    cases, single = as_case_list(y)
    out = []
    for i, c in enumerate(cases):
        a = np.asarray(c)
        if a.size and not np.all((a == 0) | (a == 1)):
            raise ValueError(f"{name}[{i}] must be binary {{0, 1}}")
        out.append(a.astype(np.uint8, copy=False))
    return out, single


def check_consistent_cases(X, y, *, names=("X", "y")):
    """Raise if the two case lists differ in length or per-case shape."""
    if len(X) != len(y):
        raise ValueError(
            f"{names[0]} has {len(X)} cases but {names[1]} has {len(y)}"
        )
    for i, (a, b) in enumerate(zip(X, y)):
        if a.shape != b.shape:
            raise ValueError(
                f"case {i}: shape {a.shape} of {names[0]} does not match "
                f"shape {b.shape} of {names[1]}"
            )


def rewrap(template, array, cls):
    """Wrap ``array`` like ``template``: as a volume if it was one."""
    if isinstance(template, _Volume):
        return cls(template.geometry, array)
    return array


def restore(X, arrays, cls=ConformalVolume):
    """Give results back in the structure the caller used for ``X``."""
    if _is_single(X):
        return rewrap(X, arrays[0], cls)
    return [rewrap(x, a, cls) for x, a in zip(X, arrays)]


__all__ = [
    "as_case_list",
    "check_probabilities",
    "check_labels",
    "check_consistent_cases",
    "restore",
]
