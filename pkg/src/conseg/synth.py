"""Synthetic cohorts for exercising the pipeline without real scans.

Randomness comes from Philox-4x64 (10 rounds), a counter-based generator,
keyed by ``(seed, stream)``; output blocks come from counters 1, 2, ... in
order. Each case and each i.i.d. draw owns its own
stream, so any case can be regenerated in isolation. Raw 64-bit outputs map
to uniforms as ``((x >> 11) + 0.5) / 2**53`` (never 0 or 1) and to normals
by the inverse normal CDF; both transforms are fixed so cohorts reproduce
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtri

from .volume import LabelVolume, ProbVolume, VolumeGeometry

# stream words at or above this value are reserved for i.i.d. voxel draws
_IID_STREAM_BASE = 1 << 63

IID_PREVALENCE = 0.3
IID_LOGIT_MEAN = 2.0
IID_LOGIT_SD = 1.5


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_cases: int = 50
    dims: tuple = (32, 32, 32)
    blob_radius_range: tuple = (6.0, 10.0)
    noise_sigma_range: tuple = (0.5, 6.0)
    sharpness: float = 4.0
    voxel_spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.n_cases < 0:
            raise ValueError("n_cases must be non-negative")
        if len(self.dims) != 3 or min(self.dims) < 8:
            raise ValueError("synthetic volumes need dims >= (8, 8, 8)")
        for name in ("blob_radius_range", "noise_sigma_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must be an ordered non-negative pair")
        if self.blob_radius_range[0] <= 0:
            raise ValueError("blob radii must be positive")
        if not self.sharpness > 0:
            raise ValueError("sharpness must be positive")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


class PhiloxStream:
    """Sequential uniforms/normals from one Philox key."""

    def __init__(self, seed: int, stream: int):
        key = np.array([seed, stream], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key, counter=0)

    def raw(self, n: int) -> np.ndarray:
        return self._bitgen.random_raw(n)

    def uniform(self, n: int) -> np.ndarray:
        bits = self.raw(n) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        return ndtri(self.uniform(n))


def _lerp(u, lo, hi):
    return lo + u * (hi - lo)


def generate_case(cfg: SynthConfig, case_index: int):
    """One synthetic case: an ellipsoidal lesion plus noisy probabilities.

    Probabilities are ``logistic(sharpness * d + sigma * z)`` where ``d`` is
    an approximate signed distance to the ellipsoid surface (positive
    inside) and ``z`` is per-voxel standard normal noise. ``sigma`` is drawn
    per case from ``noise_sigma_range`` and returned as the difficulty.

    Returns
    -------
    prob : ProbVolume
        float32-representable values, so a disk round-trip is lossless.
    label : LabelVolume
    difficulty : float
    """
    rng = PhiloxStream(cfg.seed, case_index)
    u = rng.uniform(8)
    dims = np.array(cfg.dims, dtype=np.float64)
    radii = _lerp(u[3:6], *cfg.blob_radius_range)
    lo = np.minimum(radii, (dims - 1) / 2)
    center = _lerp(u[0:3], lo, dims - 1 - lo)
    sigma = float(_lerp(u[6], *cfg.noise_sigma_range))

    grids = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in cfg.dims), indexing="ij")
    rho = np.sqrt(sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii)))
    signed_dist = np.cbrt(np.prod(radii)) * (1.0 - rho)
    label = (rho <= 1.0).astype(np.uint8)

    n = int(np.prod(cfg.dims))
    noise = rng.normal(n).reshape(cfg.dims, order="F")
    logits = cfg.sharpness * signed_dist + sigma * noise
    prob = expit(logits).astype(np.float32).astype(np.float64)

    geometry = VolumeGeometry(cfg.dims, cfg.voxel_spacing)
    return ProbVolume(geometry, prob), LabelVolume(geometry, label), sigma


def generate_iid_voxels(cfg: SynthConfig, n: int, stream: int = 0):
    """``n`` exchangeable ``(p_norm, label)`` pairs.

    Labels are Bernoulli(0.3); given the label, ``p_norm`` is
    ``logistic(+-2 + 1.5 z)``. Distinct ``stream`` values give independent
    draws under the same seed.

    Returns
    -------
    p_norm : ndarray of float64, shape (n,)
    labels : ndarray of uint8, shape (n,)
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= stream < _IID_STREAM_BASE:
        raise ValueError("stream out of range")
    rng = PhiloxStream(cfg.seed, _IID_STREAM_BASE | stream)
    labels = (rng.uniform(n) < IID_PREVALENCE).astype(np.uint8)
    z = rng.normal(n)
    mean = np.where(labels == 1, IID_LOGIT_MEAN, -IID_LOGIT_MEAN)
    return expit(mean + IID_LOGIT_SD * z), labels
