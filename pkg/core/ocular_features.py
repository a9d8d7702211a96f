"""
Ocular feature extraction.

Point-to-point angular velocity, velocity-threshold fixation/saccade
identification, and the 500 ms / 250 ms sliding-window ocular feature
vectors (pupil statistics, saccade and fixation metrics, AOI allocation).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import DataError
from core.models import (
    AoiRect,
    FIXATION_FEATURES,
    FeatureWindow,
    Label,
    Phase,
    PHASE_ORDER,
    SACCADE_FEATURES,
    ScreenGeometry,
    aoi_feature_names,
    feature_columns,
    pixel_pitch,
)
from core.preprocessing import CleanSeries, GazeSeries, savitzky_golay

logger = logging.getLogger(__name__)

# Window-selection tolerance on timestamps
_TIME_EPS = 1e-9


class EventKind(str, Enum):
    FIXATION = "Fixation"
    SACCADE = "Saccade"


@dataclass(frozen=True)
class OcularEvent:
    """
    One fixation or saccade.

    Amplitude and velocities are set for saccades only; centroids for
    fixations only. start_index/end_index are the half-open sample run on
    the velocity grid.
    """

    kind: EventKind
    t_start: float
    t_end: float
    start_index: int
    end_index: int
    amplitude_deg: Optional[float] = None
    peak_velocity_dps: Optional[float] = None
    mean_velocity_dps: Optional[float] = None
    centroid_x: Optional[float] = None
    centroid_y: Optional[float] = None

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def overlap(self, a: float, b: float) -> float:
        return max(0.0, min(self.t_end, b) - max(self.t_start, a))


def visual_angle_deg(distance_px: np.ndarray, geometry: ScreenGeometry) -> np.ndarray:
    """
    Angle subtended at the eye by an on-screen distance.

    theta = 2 * atan(d_mm / (2 * D_mm)) with d_mm = pixel_pitch * distance_px.

    Examples:
        >>> visual_angle_deg(100.0, ScreenGeometry(1920, 1080, 604.52, 600.0))
        2.6200...
    """
    d_mm = pixel_pitch(geometry) * np.asarray(distance_px, dtype=float)
    return np.degrees(2.0 * np.arctan(d_mm / (2.0 * geometry.viewing_distance_mm)))


def point_velocity(
    gaze: GazeSeries,
    geometry: ScreenGeometry,
    sg_window: int = 13,
    sg_polyorder: int = 3,
) -> CleanSeries:
    """
    Angular gaze velocity in degrees per second.

    v[i] is the angle between gaze points i-1 and i divided by dt; v[0]
    repeats v[1]. The profile is then Savitzky-Golay smoothed.

    Args:
        gaze: Cleaned gaze on a uniform grid
        geometry: Screen geometry (pixel pitch and viewing distance)
        sg_window: Smoothing window in samples
        sg_polyorder: Smoothing polynomial order

    Returns:
        CleanSeries of velocities on the gaze grid

    Raises:
        DataError: If fewer than 2 samples are given
        ConfigError: If the geometry is degenerate
    """
    x = np.asarray(gaze.x.v, dtype=float)
    y = np.asarray(gaze.y.v, dtype=float)
    if len(x) < 2:
        raise DataError("velocity needs at least 2 gaze samples")
    geometry.validate()

    step_px = np.hypot(np.diff(x), np.diff(y))
    theta = visual_angle_deg(step_px, geometry)
    v = np.empty(len(x))
    v[1:] = theta / gaze.x.dt
    v[0] = v[1]

    raw = gaze.x.with_values(v)
    if len(raw) < sg_window:
        return raw
    return savitzky_golay(raw, sg_window, sg_polyorder)


def _run_lengths(labels: np.ndarray) -> list[list[int]]:
    """[kind, start, end) runs of an integer label array."""
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(labels)]])
    return [[int(labels[s]), int(s), int(e)] for s, e in zip(starts, ends)]


def _coalesce(runs: list[list[int]]) -> list[list[int]]:
    merged: list[list[int]] = []
    for kind, start, end in runs:
        if merged and merged[-1][0] == kind:
            merged[-1][2] = end
        else:
            merged.append([kind, start, end])
    return merged


def detect_events(
    velocity: CleanSeries,
    gaze: GazeSeries,
    vel_threshold_dps: float = 30.0,
    min_fixation_s: float = 0.060,
    min_saccade_s: float = 0.010,
    geometry: Optional[ScreenGeometry] = None,
) -> list[OcularEvent]:
    """
    Identify fixations and saccades with a velocity threshold (I-VT).

    Samples above vel_threshold_dps form saccade runs, the rest fixation
    runs. Saccade runs shorter than min_saccade_s become fixation; then
    fixation runs shorter than min_fixation_s that sit next to a saccade
    become saccade. Runs of the same kind are merged after each pass, so
    events alternate and tile the analysed span without gaps.

    Saccade amplitude is the angle between the gaze position before the
    first above-threshold step and the position after the last one.

    Args:
        velocity: Angular velocity from point_velocity
        gaze: Gaze positions on the same grid
        vel_threshold_dps: Saccade velocity threshold
        min_fixation_s: Shortest fixation kept as such
        min_saccade_s: Shortest saccade kept as such
        geometry: Screen geometry for amplitudes (amplitudes omitted if None)

    Returns:
        Events in time order

    Raises:
        DataError: If the input is empty or velocity and gaze are not aligned
    """
    v = np.asarray(velocity.v, dtype=float)
    n = len(v)
    if n == 0:
        raise DataError("event detection needs a non-empty velocity series")
    if len(gaze.x) != n:
        raise DataError(f"velocity ({n}) and gaze ({len(gaze.x)}) are not aligned")

    dt = velocity.dt
    with np.errstate(invalid="ignore"):
        above = np.nan_to_num(v, nan=0.0) > vel_threshold_dps
    runs = _run_lengths(above.astype(int))

    for run in runs:
        if run[0] == 1 and (run[2] - run[1]) * dt < min_saccade_s - _TIME_EPS:
            run[0] = 0
    runs = _coalesce(runs)

    if len(runs) > 1:
        for run in runs:
            if run[0] == 0 and (run[2] - run[1]) * dt < min_fixation_s - _TIME_EPS:
                run[0] = 1
        runs = _coalesce(runs)

    t = velocity.t
    x = np.asarray(gaze.x.v, dtype=float)
    y = np.asarray(gaze.y.v, dtype=float)
    events = []
    for kind, start, end in runs:
        t_start = float(t[start])
        t_end = float(t[end]) if end < n else float(t[-1] + dt)
        if kind == 1:
            before = max(start - 1, 0)
            amplitude = None
            if geometry is not None:
                dist = math.hypot(x[end - 1] - x[before], y[end - 1] - y[before])
                amplitude = float(visual_angle_deg(dist, geometry))
            segment = v[start:end]
            events.append(OcularEvent(
                kind=EventKind.SACCADE,
                t_start=t_start,
                t_end=t_end,
                start_index=start,
                end_index=end,
                amplitude_deg=amplitude,
                peak_velocity_dps=float(np.nanmax(segment)),
                mean_velocity_dps=float(np.nanmean(segment)),
            ))
        else:
            events.append(OcularEvent(
                kind=EventKind.FIXATION,
                t_start=t_start,
                t_end=t_end,
                start_index=start,
                end_index=end,
                centroid_x=float(np.nanmean(x[start:end])),
                centroid_y=float(np.nanmean(y[start:end])),
            ))
    return events


def window_count(duration_s: float, win_s: float, step_s: float) -> int:
    """Number of sliding windows fitting in a span: floor((T - win) / step) + 1."""
    if duration_s + _TIME_EPS < win_s:
        return 0
    return int(math.floor((duration_s - win_s) / step_s + _TIME_EPS)) + 1


def _aoi_entries(inside: np.ndarray) -> int:
    """Outside-to-inside transitions, counting an initial inside sample as one entry."""
    if len(inside) == 0:
        return 0
    return int(inside[0]) + int(np.sum(~inside[:-1] & inside[1:]))


def _describe(values: np.ndarray) -> tuple[Optional[float], ...]:
    values = values[~np.isnan(values)]
    if len(values) == 0:
        return None, None, None, None
    return float(values.mean()), float(values.std()), float(values.min()), float(values.max())


def window_ocular(
    events: Sequence[OcularEvent],
    pupil: dict[str, CleanSeries],
    gaze: GazeSeries,
    aois: Sequence[AoiRect],
    win_s: float = 0.5,
    step_s: float = 0.25,
    participant_id: str = "",
    phase: Phase = Phase.LOW,
) -> list[FeatureWindow]:
    """
    Compute ocular feature vectors over sliding windows.

    Windows start at t0 + k * step_s where t0 is the first gaze sample;
    samples are selected by timestamp. Per window:
    - pupil {left,right,avg} mean/std/min/max over non-missing samples
    - saccade and fixation counts, amplitudes, durations and velocities
      from events whose onset lies in the window; rates = count / win_s
    - saccade_fixation_ratio = saccade time / fixation time overlapping
      the window (missing when no fixation time)
    - per AOI: proportion of valid samples inside, entries / win_s

    A window without valid gaze samples keeps its pupil features; its
    event and AOI features are missing.

    Args:
        events: Output of detect_events for the same span
        pupil: 'left'/'right'/'avg' cleaned pupil series
        gaze: Cleaned gaze; its gap_mask is the validity mask
        aois: Areas of interest
        win_s: Window length in seconds
        step_s: Window step in seconds
        participant_id: Id stamped on each window
        phase: Phase stamped on each window

    Returns:
        Feature windows in time order (empty if the span is shorter than win_s)
    """
    if win_s <= 0 or step_s <= 0:
        raise ValueError("win_s and step_s must be positive")

    t = gaze.t
    t0 = float(t[0])
    n_windows = window_count(gaze.x.duration, win_s, step_s)
    x = np.asarray(gaze.x.v, dtype=float)
    y = np.asarray(gaze.y.v, dtype=float)
    valid = gaze.valid

    saccades = [e for e in events if e.kind == EventKind.SACCADE]
    fixations = [e for e in events if e.kind == EventKind.FIXATION]
    sac_onsets = np.array([e.t_start for e in saccades])
    fix_onsets = np.array([e.t_start for e in fixations])

    windows = []
    for k in range(n_windows):
        a = t0 + k * step_s
        b = a + win_s
        in_win = (t >= a - _TIME_EPS) & (t < b - _TIME_EPS)
        feats: dict[str, Optional[float]] = {}

        for eye in ("left", "right", "avg"):
            series = pupil.get(eye)
            if series is None:
                stats = (None,) * 4
            else:
                sel = (series.t >= a - _TIME_EPS) & (series.t < b - _TIME_EPS)
                stats = _describe(np.asarray(series.v, dtype=float)[sel])
            for name, value in zip(("mean", "std", "min", "max"), stats):
                feats[f"pupil_{eye}_{name}"] = value

        has_gaze = bool(np.any(valid & in_win))
        if has_gaze:
            feats.update(_event_features(saccades, fixations, sac_onsets, fix_onsets, a, b, win_s))
            wx, wy, wv = x[in_win], y[in_win], valid[in_win]
            n_valid = int(wv.sum())
            for aoi in aois:
                inside = aoi.contains(wx[wv], wy[wv])
                feats[f"aoi_{aoi.name}_proportion"] = float(inside.sum()) / n_valid
                feats[f"aoi_{aoi.name}_rate"] = _aoi_entries(inside) / win_s
        else:
            for name in SACCADE_FEATURES + FIXATION_FEATURES + aoi_feature_names(r.name for r in aois):
                feats[name] = None

        windows.append(FeatureWindow(
            participant_id=participant_id,
            phase=phase,
            window_index=k,
            t_start=a,
            t_end=b,
            features=feats,
        ))
    return windows


def _event_features(saccades, fixations, sac_onsets, fix_onsets, a, b, win_s) -> dict:
    def onset_in(onsets):
        if len(onsets) == 0:
            return np.array([], dtype=int)
        return np.flatnonzero((onsets >= a - _TIME_EPS) & (onsets < b - _TIME_EPS))

    sac = [saccades[i] for i in onset_in(sac_onsets)]
    fix = [fixations[i] for i in onset_in(fix_onsets)]
    amplitudes = [e.amplitude_deg for e in sac if e.amplitude_deg is not None]
    durations = [e.duration for e in fix]

    sac_time = sum(e.overlap(a, b) for e in saccades)
    fix_time = sum(e.overlap(a, b) for e in fixations)

    return {
        "saccade_count_mean": float(len(sac)),
        "saccade_rate": len(sac) / win_s,
        "saccade_amplitude_mean": float(np.mean(amplitudes)) if amplitudes else None,
        "saccade_amplitude_max": float(np.max(amplitudes)) if amplitudes else None,
        "saccade_velocity_max": max(e.peak_velocity_dps for e in sac) if sac else None,
        "saccade_fixation_ratio": sac_time / fix_time if fix_time > 0 else None,
        "fixation_duration_mean": float(np.mean(durations)) if durations else None,
        "fixation_duration_max": float(np.max(durations)) if durations else None,
        "fixation_duration_sum": float(np.sum(durations)) if durations else 0.0,
        "fixation_count": float(len(fix)),
        "fixation_rate": len(fix) / win_s,
    }


def phase_feature_summary(
    windows: pd.DataFrame,
    labels: dict[str, int],
    features: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """
    Per-phase group means and standard errors of window features.

    Windows are first averaged per participant and phase; group statistics
    are then taken over participant means.

    Args:
        windows: Feature table (META_COLUMNS + feature columns)
        labels: participant -> 0/1 (1 = win)
        features: Columns to summarise (default: all feature columns)

    Returns:
        DataFrame with columns [feature, phase, group, mean, sem, n]
        - group is 'win' or 'loss'
        - sem = sd(ddof=1) / sqrt(n); NaN when n < 2

    Raises:
        ValueError: If a participant in windows has no label
    """
    features = list(features) if features is not None else feature_columns(windows)
    unknown = sorted(set(windows["participant"]) - set(labels))
    if unknown:
        raise ValueError(f"participants without labels: {unknown}")

    per_subject = windows.groupby(["participant", "phase"], sort=True)[features].mean().reset_index()
    per_subject["group"] = per_subject["participant"].map(
        lambda pid: Label(labels[pid]).text
    )

    rows = []
    phases = [p.value for p in PHASE_ORDER if p.value in set(per_subject["phase"])]
    for feature in features:
        for phase in phases:
            in_phase = per_subject[per_subject["phase"] == phase]
            for group in ("win", "loss"):
                values = in_phase.loc[in_phase["group"] == group, feature].dropna()
                n = len(values)
                rows.append({
                    "feature": feature,
                    "phase": phase,
                    "group": group,
                    "mean": float(values.mean()) if n else np.nan,
                    "sem": float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else np.nan,
                    "n": n,
                })
    return pd.DataFrame(rows, columns=["feature", "phase", "group", "mean", "sem", "n"])
