"""Run configuration: a JSON file whose keys mirror :class:`RunConfig`."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .io.manifest import SPLITS
from .normalization import RANGE_MODES
from .synth import SynthConfig

MASK_MODES = ("all_voxels", "nonzero_prob_support", "external_mask")
REPORT_FORMATS = ("csv", "json", "svg")
# patient-level split used by default
DEFAULT_FRACTIONS = {"train": 0.7, "validation": 0.1, "calibration": 0.1, "test": 0.1}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SplitConfig:
    seed: int = 0
    fractions: dict = field(default_factory=lambda: dict(DEFAULT_FRACTIONS))

    def __post_init__(self):
        unknown = set(self.fractions) - set(SPLITS)
        if unknown:
            raise ConfigError(f"unknown split(s) {sorted(unknown)}; allowed: {', '.join(SPLITS)}")
        if any(v < 0 for v in self.fractions.values()) or sum(self.fractions.values()) <= 0:
            raise ConfigError("split fractions must be non-negative and not all zero")


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.002
    epsilon: float = 1e-6
    range_mode: str = "theoretical"
    mask_mode: str = "all_voxels"
    bmot: Optional[float] = None
    output_dir: Path = Path("run")
    manifest: Optional[Path] = None
    model: Optional[Path] = None
    report_formats: tuple = ("csv", "json")
    workers: int = 1
    synth: SynthConfig = field(default_factory=SynthConfig)
    split: SplitConfig = field(default_factory=SplitConfig)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.range_mode not in RANGE_MODES:
            raise ConfigError(f"range_mode must be one of {RANGE_MODES}")
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(f"mask_mode must be one of {MASK_MODES}")
        if self.bmot is not None and not 0.0 <= self.bmot <= 1.0:
            raise ConfigError("bmot must be in [0, 1]")
        bad = set(self.report_formats) - set(REPORT_FORMATS)
        if bad:
            raise ConfigError(f"unknown report format(s) {sorted(bad)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def manifest_path(self) -> Path:
        return self.manifest or self.output_dir / "cohort" / "manifest.tsv"

    @property
    def model_path(self) -> Path:
        return self.model or self.output_dir / "model.json"

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_PATH_KEYS = ("output_dir", "manifest", "model")


def _sub(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in '{where}': {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{where}' section: {exc}") from exc


def config_from_dict(data: dict, base: Path = Path(".")) -> RunConfig:
    """Build a RunConfig; relative paths resolve against ``base``."""
    data = dict(data)
    names = {f.name for f in fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    if "synth" in data:
        syn = dict(data["synth"]) if isinstance(data["synth"], dict) else data["synth"]
        if isinstance(syn, dict):
            for k in ("dims", "blob_radius_range", "noise_sigma_range", "voxel_spacing"):
                if k in syn:
                    syn[k] = tuple(syn[k])
        data["synth"] = _sub(SynthConfig, syn, "synth")
    if "split" in data:
        data["split"] = _sub(SplitConfig, data["split"], "split")
    for k in _PATH_KEYS:
        if data.get(k) is not None:
            p = Path(data[k])
            data[k] = p if p.is_absolute() else base / p
    if "report_formats" in data:
        data["report_formats"] = tuple(data["report_formats"])
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(data, base=path.parent)
