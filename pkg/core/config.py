"""
Pipeline configuration.

PipelineConfig is a pydantic model tree; every level rejects unknown keys
so a typo in a config file fails before any computation starts.
"""

import json
import logging
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.errors import ConfigError
from core.gbdt import PRESETS
from core.models import (
    DEFAULT_CARDIAC_FEATURES,
    DEFAULT_OCULAR_FEATURES,
    Modality,
)

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "PHYSIOPRED_OUTPUT_ROOT"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class IoConfig(_Section):
    timestamp_jitter_s: float = Field(0.001, ge=0)


class FilterConfig(_Section):
    cutoff_hz: float = Field(gt=0)
    order: int = Field(gt=0)
    zero_phase: bool
    rate_hz: float = Field(gt=0)

    @field_validator("order")
    @classmethod
    def _even_order(cls, value: int) -> int:
        if value % 2:
            raise ValueError("Butterworth order must be even")
        return value

    @model_validator(mode="after")
    def _below_nyquist(self) -> "FilterConfig":
        if self.cutoff_hz >= self.rate_hz / 2:
            raise ValueError(f"cutoff_hz {self.cutoff_hz} must be below Nyquist ({self.rate_hz / 2} Hz)")
        return self


class PupilConfig(FilterConfig):
    cutoff_hz: float = Field(4.0, gt=0)
    order: int = Field(4, gt=0)
    zero_phase: bool = False
    rate_hz: float = Field(250.0, gt=0)


class BvpConfig(FilterConfig):
    cutoff_hz: float = Field(3.0, gt=0)
    order: int = Field(6, gt=0)
    zero_phase: bool = True
    rate_hz: float = Field(64.0, gt=0)
    peak_k: float = 0.5
    threshold_window_s: float = Field(2.0, gt=0)
    refractory_s: float = Field(0.27, gt=0)


class IbiConfig(_Section):
    min_s: float = Field(0.27, gt=0)
    max_s: float = Field(2.0, gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "IbiConfig":
        if self.min_s >= self.max_s:
            raise ValueError("ibi.min_s must be below ibi.max_s")
        return self


class SavgolConfig(_Section):
    window: int = Field(13, gt=0)
    polyorder: int = Field(3, ge=0)

    @model_validator(mode="after")
    def _shape(self) -> "SavgolConfig":
        if self.window % 2 == 0:
            raise ValueError("sg.window must be odd")
        if self.polyorder >= self.window:
            raise ValueError("sg.polyorder must be below sg.window")
        return self


class InterpConfig(_Section):
    max_gap_s: float = Field(0.5, ge=0)


class EventConfig(_Section):
    vel_threshold_dps: float = Field(30.0, gt=0)
    min_fixation_s: float = Field(0.060, ge=0)
    min_saccade_s: float = Field(0.010, ge=0)


class WindowConfig(_Section):
    ocular_win_s: float = Field(0.5, gt=0)
    ocular_step_s: float = Field(0.25, gt=0)
    cardiac_win_s: float = Field(15.0, gt=0)


class FeatureConfig(_Section):
    ocular: list[str] = Field(default_factory=lambda: list(DEFAULT_OCULAR_FEATURES))
    cardiac: list[str] = Field(default_factory=lambda: list(DEFAULT_CARDIAC_FEATURES))

    @field_validator("ocular", "cardiac")
    @classmethod
    def _non_empty(cls, value: list[str]) -> list[str]:
        if not value:
            raise ValueError("feature set must not be empty")
        if len(set(value)) != len(value):
            raise ValueError("feature set contains duplicates")
        return value


class NormalizeConfig(_Section):
    within_subject: bool = True


def _known_preset(value: str) -> str:
    if value not in PRESETS:
        raise ValueError(f"unknown preset '{value}', expected one of {sorted(PRESETS)}")
    return value


PresetName = Annotated[str, AfterValidator(_known_preset)]


class ModelConfig(_Section):
    """
    Learner settings.

    preset applies to both modalities unless ocular_preset or
    cardiac_preset names another one; presets only apply to gbdt.
    """

    learner: Literal["gbdt", "linear_margin"] = "gbdt"
    preset: PresetName = "catboost-like"
    ocular_preset: Optional[PresetName] = None
    cardiac_preset: Optional[PresetName] = "xgboost-like"
    fusion_preset: PresetName = "fusion-meta"
    grid: Optional[dict[str, list[Union[int, float]]]] = None
    inner_folds: int = Field(4, ge=2)
    C: float = Field(1.0, gt=0)


class SynthConfig(_Section):
    n_participants: int = Field(35, ge=2)
    win_fraction: float = Field(19 / 35, gt=0, lt=1)
    desk_scale: float = Field(5.0, gt=0)
    effect_size: float = Field(0.0, ge=0)
    planted_features: list[str] = Field(default_factory=list)
    noise: bool = True


class PipelineConfig(_Section):
    schema_version: Literal[1] = 1
    seed: int = 42
    jobs: int = -1
    modalities: list[Modality] = Field(
        default_factory=lambda: [Modality.OCULAR, Modality.CARDIAC, Modality.FUSED]
    )
    io: IoConfig = Field(default_factory=IoConfig)
    pupil: PupilConfig = Field(default_factory=PupilConfig)
    bvp: BvpConfig = Field(default_factory=BvpConfig)
    ibi: IbiConfig = Field(default_factory=IbiConfig)
    sg: SavgolConfig = Field(default_factory=SavgolConfig)
    interp: InterpConfig = Field(default_factory=InterpConfig)
    events: EventConfig = Field(default_factory=EventConfig)
    windows: WindowConfig = Field(default_factory=WindowConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    normalize: NormalizeConfig = Field(default_factory=NormalizeConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)

    @field_validator("jobs")
    @classmethod
    def _jobs(cls, value: int) -> int:
        if value == 0:
            raise ValueError("jobs must be positive, or negative to count back from all cores")
        return value

    @field_validator("modalities")
    @classmethod
    def _modalities(cls, value: list[Modality]) -> list[Modality]:
        if not value:
            raise ValueError("at least one modality is required")
        if Modality.FUSED in value and not {Modality.OCULAR, Modality.CARDIAC} <= set(value):
            raise ValueError("fused requires both ocular and cardiac")
        return value


def load_config(path: Optional[Union[str, Path]] = None, **overrides) -> PipelineConfig:
    """
    Load and validate a pipeline configuration.

    Args:
        path: JSON config file; None gives the defaults
        **overrides: Top-level fields replacing file values (None values ignored)

    Returns:
        Validated PipelineConfig

    Raises:
        ConfigError: If the file is unreadable or fails schema validation
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")

    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    logger.debug("configuration: %s", config.model_dump_json())
    return config
