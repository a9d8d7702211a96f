"""
Domain types shared by every stage of the prediction pipeline.

Holds the raw-sample records, the session manifest, the feature-window
record, the feature registries and the Dataset container consumed by the
learners and the LOSO evaluation.
"""

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Optional

import numpy as np
import pandas as pd

from core.errors import ConfigError, DataError, LeakageError

logger = logging.getLogger(__name__)


class Phase(str, Enum):
    TUTORIAL = "Tutorial"
    LOW = "LowComplexity"
    HIGH = "HighComplexity"


PHASE_ORDER = [Phase.TUTORIAL, Phase.LOW, Phase.HIGH]


class Label(int, Enum):
    LOSS = 0
    WIN = 1

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return {"win": cls.WIN, "loss": cls.LOSS}[str(text).strip().lower()]
        except KeyError:
            raise DataError(f"label must be 'win' or 'loss', got {text!r}") from None

    @property
    def text(self) -> str:
        return "win" if self is Label.WIN else "loss"


class Modality(str, Enum):
    OCULAR = "ocular"
    CARDIAC = "cardiac"
    FUSED = "fused"


@dataclass(frozen=True)
class GazeSample:
    """One eye-tracker reading. Invalid samples carry None in x/y/pupil fields."""

    t: float
    x: Optional[float]
    y: Optional[float]
    pupil_left: Optional[float]
    pupil_right: Optional[float]
    valid: bool


@dataclass(frozen=True)
class BvpSample:
    t: float
    value: float


@dataclass(frozen=True)
class ScreenGeometry:
    width_px: float
    height_px: float
    diagonal_mm: float
    viewing_distance_mm: float

    def validate(self) -> None:
        for name in ("width_px", "height_px", "diagonal_mm", "viewing_distance_mm"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"screen geometry {name} must be positive, got {value}")

    @property
    def pixel_pitch_mm(self) -> float:
        return pixel_pitch(self)


def pixel_pitch(geometry: ScreenGeometry) -> float:
    """
    Physical size of one pixel in millimetres.

    Args:
        geometry: Screen geometry

    Returns:
        diagonal_mm / hypot(width_px, height_px)

    Raises:
        ConfigError: If any geometry value is not positive

    Examples:
        >>> pixel_pitch(ScreenGeometry(1920, 1080, 604.52, 600.0))  # 23.8 inch
        0.27444...
    """
    geometry.validate()
    return geometry.diagonal_mm / math.hypot(geometry.width_px, geometry.height_px)


@dataclass(frozen=True)
class AoiRect:
    """Named screen rectangle, half-open: x0 <= x < x1 and y0 <= y < y1."""

    name: str
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)


@dataclass(frozen=True)
class PhaseSpan:
    phase: Phase
    t_start: float
    t_end: float

    def contains(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.t_start) & (t < self.t_end)


@dataclass(frozen=True)
class SessionManifest:
    participant_id: str
    label: Label
    geometry: ScreenGeometry
    aois: tuple[AoiRect, ...]
    phases: tuple[PhaseSpan, ...]
    gaze_path: str
    bvp_path: str

    def validate(self) -> None:
        """
        Check the manifest invariants.

        Raises:
            ConfigError: On invalid geometry, out-of-bounds or duplicate AOIs,
                missing/duplicated phases, or overlapping/misordered spans
        """
        self.geometry.validate()

        names = [aoi.name for aoi in self.aois]
        if len(set(names)) != len(names):
            raise ConfigError(f"{self.participant_id}: duplicate AOI names {names}")
        for aoi in self.aois:
            if not (aoi.x0 < aoi.x1 and aoi.y0 < aoi.y1):
                raise ConfigError(f"{self.participant_id}: AOI '{aoi.name}' has empty extent")
            if (aoi.x0 < 0 or aoi.y0 < 0
                    or aoi.x1 > self.geometry.width_px or aoi.y1 > self.geometry.height_px):
                raise ConfigError(f"{self.participant_id}: AOI '{aoi.name}' lies outside the screen")

        phases = [span.phase for span in self.phases]
        if sorted(phases, key=PHASE_ORDER.index) != PHASE_ORDER or len(phases) != 3:
            raise ConfigError(
                f"{self.participant_id}: expected exactly one span per phase, got "
                f"{[p.value for p in phases]}"
            )
        spans = sorted(self.phases, key=lambda s: PHASE_ORDER.index(s.phase))
        for span in spans:
            if not span.t_start < span.t_end:
                raise ConfigError(f"{self.participant_id}: phase {span.phase.value} has t_start >= t_end")
        for earlier, later in zip(spans, spans[1:]):
            if later.t_start < earlier.t_end:
                raise ConfigError(
                    f"{self.participant_id}: phase {later.phase.value} overlaps or precedes "
                    f"{earlier.phase.value}"
                )

    def span(self, phase: Phase) -> PhaseSpan:
        for span in self.phases:
            if span.phase == phase:
                return span
        raise ConfigError(f"{self.participant_id}: no span for phase {phase.value}")

    @property
    def aoi_names(self) -> list[str]:
        return [aoi.name for aoi in self.aois]


@dataclass(frozen=True)
class FeatureWindow:
    """One window's feature vector; missing values are None, never NaN."""

    participant_id: str
    phase: Phase
    window_index: int
    t_start: float
    t_end: float
    features: dict[str, Optional[float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise DataError(f"window {self.window_index}: t_end must exceed t_start")
        clean = {}
        for name, value in self.features.items():
            if value is None or not np.isfinite(value):
                clean[name] = None
            else:
                clean[name] = float(value)
        object.__setattr__(self, "features", clean)


# Feature registries

META_COLUMNS = ["participant", "phase", "window_index", "t_start", "t_end"]

PUPIL_FEATURES = [
    f"pupil_{eye}_{stat}"
    for eye in ("left", "right", "avg")
    for stat in ("mean", "std", "min", "max")
]
SACCADE_FEATURES = [
    "saccade_count_mean",
    "saccade_rate",
    "saccade_amplitude_mean",
    "saccade_amplitude_max",
    "saccade_velocity_max",
    "saccade_fixation_ratio",
]
FIXATION_FEATURES = [
    "fixation_duration_mean",
    "fixation_duration_max",
    "fixation_duration_sum",
    "fixation_count",
    "fixation_rate",
]

DEFAULT_AOI_NAMES = ["hand_cards", "potion_bar"]


def aoi_feature_names(aoi_names: Iterable[str]) -> list[str]:
    return [f"aoi_{name}_{kind}" for name in aoi_names for kind in ("proportion", "rate")]


def ocular_feature_names(aoi_names: Iterable[str] = DEFAULT_AOI_NAMES) -> list[str]:
    """Complete ocular registry for a given AOI set."""
    return PUPIL_FEATURES + SACCADE_FEATURES + FIXATION_FEATURES + aoi_feature_names(aoi_names)


CARDIAC_FEATURES = [
    "hr_mean",
    "hr_range",
    "rmssd",
    "mean_nn",
    "pnn50",
    "pnn20",
    "nn_ratio",
    "bvp_min",
    "bvp_max",
    "bvp_mean",
    "bvp_std",
    "bvp_variance",
    "bvp_rms",
    "bvp_skewness",
    "bvp_kurtosis",
]

# Final feature sets used for modelling
DEFAULT_OCULAR_FEATURES = SACCADE_FEATURES + aoi_feature_names(DEFAULT_AOI_NAMES)
DEFAULT_CARDIAC_FEATURES = ["hr_mean", "hr_range"]


class OcularComponent(str, Enum):
    PUPIL = "Pupil"
    FIXATION = "Fixation"
    SACCADE = "Saccade"
    AOI_GAZE = "AoiGaze"


_COMPONENT_PREFIX = {
    OcularComponent.PUPIL: "pupil_",
    OcularComponent.FIXATION: "fixation_",
    OcularComponent.SACCADE: "saccade_",
    OcularComponent.AOI_GAZE: "aoi_",
}


def component_features(component: OcularComponent, registry: Iterable[str]) -> list[str]:
    prefix = _COMPONENT_PREFIX[OcularComponent(component)]
    return [name for name in registry if name.startswith(prefix)]


def feature_columns(table: pd.DataFrame) -> list[str]:
    return [col for col in table.columns if col not in META_COLUMNS]


def windows_to_frame(windows: list[FeatureWindow], registry: list[str]) -> pd.DataFrame:
    """
    Convert feature windows to a table with one row per window.

    Missing values become NaN, the pandas representation of missing.

    Args:
        windows: Feature windows (any participants/phases)
        registry: Feature columns, in output order

    Returns:
        DataFrame with META_COLUMNS followed by the registry columns
    """
    rows = []
    for window in windows:
        row = {
            "participant": window.participant_id,
            "phase": window.phase.value,
            "window_index": window.window_index,
            "t_start": window.t_start,
            "t_end": window.t_end,
        }
        for name in registry:
            value = window.features.get(name)
            row[name] = np.nan if value is None else value
        rows.append(row)
    return pd.DataFrame(rows, columns=META_COLUMNS + list(registry))


class AccessGuard:
    """
    Records which participants a LOSO fold reads and forbids the held-out one.

    Inside `training_scope(held_out)`, any Dataset selection that includes
    the held-out participant raises LeakageError. Accesses are logged per
    fold so a report can prove the held-out participant was never touched.
    """

    def __init__(self):
        self._held_out: Optional[str] = None
        self.accessed: dict[str, set[str]] = {}

    @contextmanager
    def training_scope(self, held_out: str) -> Iterator[None]:
        previous = self._held_out
        self._held_out = held_out
        self.accessed.setdefault(held_out, set())
        try:
            yield
        finally:
            self._held_out = previous

    def check(self, participants: Iterable[str]) -> None:
        if self._held_out is None:
            return
        participants = set(participants)
        if self._held_out in participants:
            raise LeakageError(
                f"held-out participant {self._held_out} read during training"
            )
        self.accessed[self._held_out].update(participants)


@dataclass(frozen=True)
class Dataset:
    """
    Window-level feature tables per modality plus subject labels.

    Attributes:
        labels: participant_id -> 0/1 (1 = Win)
        tables: modality -> table with META_COLUMNS and feature columns
        guard: Optional access guard notified on every selection
    """

    labels: dict[str, int]
    tables: dict[Modality, pd.DataFrame]
    guard: Optional[AccessGuard] = None

    def __post_init__(self):
        if set(self.labels.values()) - {0, 1}:
            raise DataError("labels must be binary (0 = loss, 1 = win)")
        for modality, table in self.tables.items():
            present = set(table["participant"].astype(str))
            missing = sorted(set(self.labels) - present)
            if missing:
                raise DataError(f"{modality.value}: participants without windows: {missing}")

    @property
    def participants(self) -> list[str]:
        return sorted(self.labels)

    @property
    def modalities(self) -> list[Modality]:
        return list(self.tables)

    def with_guard(self, guard: Optional[AccessGuard]) -> "Dataset":
        return replace(self, guard=guard)

    def select(
        self,
        modality: Modality,
        participants: Iterable[str],
        phase: Optional[Phase] = Phase.LOW,
    ) -> pd.DataFrame:
        """Rows of the given participants (and phase), reported to the guard."""
        participants = list(participants)
        if self.guard is not None:
            self.guard.check(participants)
        table = self.tables[modality]
        mask = table["participant"].isin(participants)
        if phase is not None:
            mask &= table["phase"] == Phase(phase).value
        return table.loc[mask]

    def label_vector(self, participants: Iterable[str]) -> np.ndarray:
        return np.array([self.labels[pid] for pid in participants], dtype=int)
