"""Pipeline configuration and its ``key=value`` text form.

Every tunable threshold lives here with its default. A config file lists
any subset of the keys below; unknown keys are rejected so typos surface::

    # jumpheight config
    savgol_window=21
    fall_fraction=0.4
    ptm_scope=repetition
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import FormatError, ValidationError
from .forceplate import FlightDetectionConfig
from .model import Constants
from .preprocess import DenoiseConfig, SegmentConfig


@dataclass(frozen=True)
class CalibrationConfig:
    fall_fraction: float = 0.4
    ptm_reading: str = "fit"
    # "repetition": each repetition uses its own scale, the session mean
    # standing in for failed ones; "session": every repetition uses the mean.
    ptm_scope: str = "repetition"

    def __post_init__(self):
        if not 0 < self.fall_fraction < 1:
            raise ValidationError("fall_fraction must be in (0, 1)")
        if self.ptm_reading not in ("fit", "vertex", "frame"):
            raise ValidationError(f"unknown ptm_reading {self.ptm_reading!r}")
        if self.ptm_scope not in ("repetition", "session"):
            raise ValidationError(f"unknown ptm_scope {self.ptm_scope!r}")


@dataclass(frozen=True)
class FailureConfig:
    min_conf: float = 0.3
    max_low_conf_fraction: float = 0.2
    max_speed_frac: float = 0.25  # of image height, per frame


@dataclass(frozen=True)
class MeasureConfig:
    baseline_fraction: float = 0.1
    # "repetition" pools every repetition as its own measurement;
    # "participant_mean" averages each participant's repetitions first.
    pooling: str = "repetition"

    def __post_init__(self):
        if not 0 < self.baseline_fraction <= 1:
            raise ValidationError("baseline_fraction must be in (0, 1]")
        if self.pooling not in ("repetition", "participant_mean"):
            raise ValidationError(f"unknown pooling {self.pooling!r}")


@dataclass(frozen=True)
class PipelineConfig:
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    flight: FlightDetectionConfig = field(default_factory=FlightDetectionConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    failure: FailureConfig = field(default_factory=FailureConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    constants: Constants = field(default_factory=Constants)

    def to_dict(self) -> dict:
        flat = {}
        for section in dataclasses.fields(self):
            flat.update(dataclasses.asdict(getattr(self, section.name)))
        return flat

    def to_text(self) -> str:
        return "".join(f"{k}={'none' if v is None else v}\n" for k, v in self.to_dict().items())


def _coerce(raw: str, default):
    text = raw.strip()
    if text.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float) or default is None:
        try:
            return float(text)
        except ValueError:
            return text
    return text


def config_from_dict(values: dict) -> PipelineConfig:
    base = PipelineConfig()
    remaining = dict(values)
    sections = {}
    for section in dataclasses.fields(PipelineConfig):
        current = getattr(base, section.name)
        updates = {}
        for f in dataclasses.fields(current):
            if f.name in remaining:
                raw = remaining.pop(f.name)
                value = _coerce(raw, getattr(current, f.name)) if isinstance(raw, str) else raw
                if f.name == "expected_reps" and value is not None:
                    value = int(value)
                updates[f.name] = value
        sections[section.name] = dataclasses.replace(current, **updates) if updates else current
    if remaining:
        raise FormatError(f"unknown config keys: {sorted(remaining)}")
    return PipelineConfig(**sections)


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}: line {lineno} is not key=value")
        key, value = line.split("=", 1)
        values[key.strip().lower()] = value
    return config_from_dict(values)
