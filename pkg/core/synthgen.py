"""
Synthetic cohort generator.

Writes participant sessions in the on-disk formats read by data_loader,
with a ground-truth sidecar listing every planted saccade, beat and AOI
dwell interval plus the group effects, so each pipeline stage can be
checked against known answers.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from core.config import SynthConfig
from core.data_loader import MANIFEST_NAME, write_bvp, write_gaze, write_manifest
from core.errors import ConfigError, DataError
from core.models import (
    CARDIAC_FEATURES,
    DEFAULT_AOI_NAMES,
    PHASE_ORDER,
    AoiRect,
    Label,
    Phase,
    PhaseSpan,
    ScreenGeometry,
    SessionManifest,
    ocular_feature_names,
)
from core.ocular_features import visual_angle_deg

logger = logging.getLogger(__name__)

TRUTH_NAME = "truth.json"

DEFAULT_GEOMETRY = ScreenGeometry(width_px=1920, height_px=1080, diagonal_mm=604.52, viewing_distance_mm=600.0)
DEFAULT_AOIS = (
    AoiRect("hand_cards", 560, 780, 1360, 1080),
    AoiRect("potion_bar", 620, 0, 1000, 80),
)
# Full-length phase durations in seconds: 3 / 25 / 10 minutes
FULL_PHASE_S = {Phase.TUTORIAL: 180.0, Phase.LOW: 1500.0, Phase.HIGH: 600.0}

AOI_MARGIN_PX = 10.0
SCREEN_MARGIN_PX = 20.0
HR_SWITCH_PERIOD_S = 20.0
BLINK_S = 0.15


@dataclass(frozen=True)
class GenerationParams:
    """Per-participant generating parameters of one phase."""

    fixation_mean_s: float = 0.30
    saccade_amplitude_px: float = 150.0
    dwell_hand_cards: float = 0.35
    dwell_potion_bar: float = 0.10
    pupil_baseline_mm: float = 3.5
    pupil_sine_mm: float = 0.2
    pupil_sine_hz: float = 0.1
    ibi_mean_s: float = 0.8
    ibi_jitter_s: float = 0.02
    hr_switch_bpm: float = 6.0
    pulse_amplitude: float = 1.0

    def dwell(self, aoi_name: str) -> float:
        return getattr(self, f"dwell_{aoi_name}", 0.0)


# Between-participant spread of each parameter; also the unit of planted effects
PARAM_SD = {
    "fixation_mean_s": 0.05,
    "saccade_amplitude_px": 30.0,
    "dwell_hand_cards": 0.08,
    "dwell_potion_bar": 0.03,
    "pupil_baseline_mm": 0.3,
    "ibi_mean_s": 0.06,
    "ibi_jitter_s": 0.008,
    "hr_switch_bpm": 2.0,
    "pulse_amplitude": 0.15,
}

_PARAM_BOUNDS = {
    "fixation_mean_s": (0.12, 1.0),
    "saccade_amplitude_px": (40.0, 600.0),
    "dwell_hand_cards": (0.02, 0.7),
    "dwell_potion_bar": (0.01, 0.25),
    "pupil_baseline_mm": (2.0, 7.0),
    "ibi_mean_s": (0.45, 1.3),
    "ibi_jitter_s": (0.0, 0.08),
    "hr_switch_bpm": (0.0, 20.0),
    "pulse_amplitude": (0.3, 2.0),
}


def feature_parameter(feature: str) -> str:
    """
    Generating parameter that drives a feature.

    Raises:
        ConfigError: If the feature is not in the ocular or cardiac registry
    """
    if feature not in ocular_feature_names(DEFAULT_AOI_NAMES) and feature not in CARDIAC_FEATURES:
        raise ConfigError(f"unknown feature {feature!r}")
    if feature.startswith("aoi_"):
        return "dwell_" + feature[len("aoi_"):].rsplit("_", 1)[0]
    if feature.startswith("pupil_"):
        return "pupil_baseline_mm"
    if feature.startswith(("saccade_amplitude", "saccade_velocity")):
        return "saccade_amplitude_px"
    if feature.startswith(("fixation_", "saccade_")):
        return "fixation_mean_s"
    if feature == "hr_range":
        return "hr_switch_bpm"
    if feature in ("rmssd", "pnn50", "pnn20", "nn_ratio"):
        return "ibi_jitter_s"
    if feature.startswith("bvp_"):
        return "pulse_amplitude"
    return "ibi_mean_s"


@dataclass(frozen=True)
class SynthSpec:
    """
    Everything that determines a synthetic cohort; same spec, same bytes.

    Attributes:
        seed: Master seed
        n_participants: Cohort size
        win_fraction: Share of win participants (rounded)
        desk_scale: Divisor applied to the full-length phase durations
        effect_size: Group difference of planted parameters in PARAM_SD units
        planted_features: Features whose generating parameters carry the effect
        effect_jitter: Per-participant spread of the planted shift, in PARAM_SD units
        noise: Sensor noise and blinks on or off
    """

    seed: int = 42
    n_participants: int = 35
    win_fraction: float = 19 / 35
    desk_scale: float = 5.0
    effect_size: float = 0.0
    planted_features: tuple[str, ...] = ()
    effect_jitter: float = 0.5
    noise: bool = True
    gaze_rate_hz: float = 250.0
    bvp_rate_hz: float = 64.0
    transition_s: float = 0.04
    pulse_sigma_s: float = 0.08
    gaze_noise_px: float = 1.0
    pupil_noise_mm: float = 0.02
    bvp_noise: float = 0.02
    blink_rate_per_min: float = 15.0
    geometry: ScreenGeometry = DEFAULT_GEOMETRY
    aois: tuple[AoiRect, ...] = DEFAULT_AOIS
    base: GenerationParams = field(default_factory=GenerationParams)

    def validate(self) -> "SynthSpec":
        if self.n_participants < 2:
            raise ConfigError(f"n_participants must be at least 2, got {self.n_participants}")
        if not 0.0 < self.win_fraction < 1.0:
            raise ConfigError(f"win_fraction must lie in (0, 1), got {self.win_fraction}")
        n_win = self.n_wins
        if n_win == 0 or n_win == self.n_participants:
            raise ConfigError("win_fraction leaves one group empty")
        if self.desk_scale <= 0 or self.effect_size < 0 or self.effect_jitter < 0:
            raise ConfigError("desk_scale must be positive; effect_size and effect_jitter non-negative")
        for feature in self.planted_features:
            feature_parameter(feature)
        self.geometry.validate()
        return self

    @property
    def n_wins(self) -> int:
        return int(round(self.win_fraction * self.n_participants))

    @property
    def planted_parameters(self) -> list[str]:
        return sorted({feature_parameter(f) for f in self.planted_features})

    def phase_durations(self) -> dict[Phase, float]:
        return {phase: FULL_PHASE_S[phase] / self.desk_scale for phase in PHASE_ORDER}

    @classmethod
    def from_config(cls, config: SynthConfig, seed: int) -> "SynthSpec":
        return cls(
            seed=seed,
            n_participants=config.n_participants,
            win_fraction=config.win_fraction,
            desk_scale=config.desk_scale,
            effect_size=config.effect_size,
            planted_features=tuple(config.planted_features),
            noise=config.noise,
        ).validate()


def plant_separability(spec: SynthSpec, features: Sequence[str], effect_size: float) -> SynthSpec:
    """
    Plant a group difference on the parameters behind the named features.

    In the LowComplexity phase, win participants get +effect_size / 2 and
    loss participants -effect_size / 2 parameter-sd units relative to
    their own baseline; every other parameter is drawn identically across
    groups.

    Raises:
        ConfigError: If a feature name is unknown
    """
    for feature in features:
        feature_parameter(feature)
    return replace(spec, planted_features=tuple(features), effect_size=float(effect_size)).validate()


def participant_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Independent stream per participant, derived from the master seed."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def participant_ids(n: int) -> list[str]:
    width = max(3, len(str(n)))
    return [f"P{i + 1:0{width}d}" for i in range(n)]


def assign_labels(spec: SynthSpec) -> dict[str, int]:
    ids = participant_ids(spec.n_participants)
    rng = np.random.default_rng(spec.seed)
    wins = set(rng.choice(spec.n_participants, size=spec.n_wins, replace=False).tolist())
    return {pid: int(i in wins) for i, pid in enumerate(ids)}


def _draw_params(spec: SynthSpec, label: int, rng: np.random.Generator) -> dict[Phase, GenerationParams]:
    base = asdict(spec.base)
    drawn = dict(base)
    for name in sorted(PARAM_SD):
        drawn[name] = base[name] + rng.normal(0.0, PARAM_SD[name])
    low = dict(drawn)
    sign = 1.0 if label == Label.WIN else -1.0
    for name in spec.planted_parameters:
        shift = sign * spec.effect_size / 2.0 + rng.normal(0.0, spec.effect_jitter)
        low[name] = drawn[name] + shift * PARAM_SD[name]

    def bounded(values: dict) -> GenerationParams:
        for name, (lo, hi) in _PARAM_BOUNDS.items():
            values[name] = float(np.clip(values[name], lo, hi))
        return GenerationParams(**values)

    common = bounded(dict(drawn))
    return {phase: bounded(dict(low)) if phase == Phase.LOW else common for phase in PHASE_ORDER}


# Gaze


def synthesize_gaze_trace(
    fixations: Sequence[tuple[float, float, float]],
    t0: float = 0.0,
    rate_hz: float = 250.0,
    transition_s: float = 0.04,
    noise_px: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    n_samples: Optional[int] = None,
) -> tuple[pd.DataFrame, list[dict]]:
    """
    Piecewise-constant gaze with linear saccadic transitions.

    Args:
        fixations: (x, y, duration_s) per fixation, in order
        t0: Time of the first sample
        rate_hz: Sampling rate
        transition_s: Saccade duration between consecutive fixations
        noise_px: Gaussian position noise
        rng: Random generator (required when noise_px > 0)
        n_samples: Trace length; defaults to the fixation schedule's length

    Returns:
        (DataFrame [t, x, y], planted saccades as dicts with t_start, t_end,
        amplitude_px); times are absolute
    """
    if not fixations:
        raise ValueError("synthesize_gaze_trace needs at least one fixation")
    knots_t, knots_x, knots_y, saccades = [], [], [], []
    s = 0.0
    for i, (x, y, duration) in enumerate(fixations):
        knots_t += [s, s + duration]
        knots_x += [x, x]
        knots_y += [y, y]
        if i + 1 < len(fixations):
            nx, ny = fixations[i + 1][0], fixations[i + 1][1]
            saccades.append({
                "t_start": t0 + s + duration,
                "t_end": t0 + s + duration + transition_s,
                "amplitude_px": float(np.hypot(nx - x, ny - y)),
            })
        s += duration + transition_s
    total = knots_t[-1]
    if n_samples is None:
        n_samples = int(round(total * rate_hz))
    rel = np.arange(n_samples) / rate_hz
    x = np.interp(rel, knots_t, knots_x)
    y = np.interp(rel, knots_t, knots_y)
    if noise_px > 0:
        x = x + rng.normal(0.0, noise_px, n_samples)
        y = y + rng.normal(0.0, noise_px, n_samples)
    return pd.DataFrame({"t": t0 + rel, "x": x, "y": y}), saccades


def _point_in(aoi: AoiRect, rng: np.random.Generator) -> tuple[float, float]:
    return (
        float(rng.uniform(aoi.x0 + AOI_MARGIN_PX, aoi.x1 - AOI_MARGIN_PX)),
        float(rng.uniform(aoi.y0 + AOI_MARGIN_PX, aoi.y1 - AOI_MARGIN_PX)),
    )


def _free_point(
    prev: tuple[float, float], amplitude: float, spec: SynthSpec, rng: np.random.Generator
) -> tuple[float, float]:
    w, h = spec.geometry.width_px, spec.geometry.height_px
    candidate = prev
    for _ in range(10):
        step = max(20.0, rng.normal(amplitude, 0.2 * amplitude))
        angle = rng.uniform(0.0, 2.0 * np.pi)
        candidate = (
            float(np.clip(prev[0] + step * np.cos(angle), SCREEN_MARGIN_PX, w - SCREEN_MARGIN_PX)),
            float(np.clip(prev[1] + step * np.sin(angle), SCREEN_MARGIN_PX, h - SCREEN_MARGIN_PX)),
        )
        inside = any(aoi.contains(np.array([candidate[0]]), np.array([candidate[1]]))[0] for aoi in spec.aois)
        if not inside:
            break
    return candidate


def _fixation_schedule(
    duration_s: float, params: GenerationParams, spec: SynthSpec, rng: np.random.Generator, start: tuple[float, float]
) -> list[tuple[float, float, float]]:
    fixations = []
    covered = 0.0
    position = start
    shape = 8.0
    while covered < duration_s:
        u = rng.random()
        acc = 0.0
        target = None
        for aoi in spec.aois:
            acc += params.dwell(aoi.name)
            if u < acc:
                target = _point_in(aoi, rng)
                break
        if target is None:
            target = _free_point(position, params.saccade_amplitude_px, spec, rng)
        dwell = max(0.08, float(rng.gamma(shape, params.fixation_mean_s / shape)))
        fixations.append((target[0], target[1], dwell))
        covered += dwell + spec.transition_s
        position = target
    return fixations


def _blink_mask(t: np.ndarray, rate_per_min: float, rng: np.random.Generator) -> np.ndarray:
    mask = np.zeros(len(t), dtype=bool)
    if rate_per_min <= 0 or len(t) == 0:
        return mask
    span = t[-1] - t[0]
    n = rng.poisson(rate_per_min * span / 60.0)
    for onset in np.sort(rng.uniform(t[0], t[-1], n)):
        mask |= (t >= onset) & (t < onset + BLINK_S)
    return mask


def _gaze_session(
    spans: list[PhaseSpan], params: dict[Phase, GenerationParams], spec: SynthSpec, rng: np.random.Generator
) -> tuple[pd.DataFrame, list[dict], list[dict]]:
    frames, saccades, dwell = [], [], []
    position = (spec.geometry.width_px / 2.0, spec.geometry.height_px / 2.0)
    noise_px = spec.gaze_noise_px if spec.noise else 0.0
    for span in spans:
        p = params[span.phase]
        n_samples = int(round((span.t_end - span.t_start) * spec.gaze_rate_hz))
        schedule = _fixation_schedule(span.t_end - span.t_start, p, spec, rng, position)
        trace, planted = synthesize_gaze_trace(
            schedule, span.t_start, spec.gaze_rate_hz, spec.transition_s, noise_px, rng, n_samples
        )
        t = trace["t"].to_numpy()
        pupil = synthesize_pupil(t, p, spec.pupil_noise_mm if spec.noise else 0.0, rng)
        trace["pupil_left"] = pupil
        trace["pupil_right"] = pupil + 0.05
        trace["valid"] = ~_blink_mask(t, spec.blink_rate_per_min if spec.noise else 0.0, rng)
        frames.append(trace)

        end = t[-1] if len(t) else span.t_start
        for sac in planted:
            if sac["t_end"] <= end:
                sac["phase"] = span.phase.value
                sac["amplitude_deg"] = float(visual_angle_deg(sac["amplitude_px"], spec.geometry))
                saccades.append(sac)
        s = span.t_start
        for x, y, duration in schedule:
            for aoi in spec.aois:
                if aoi.contains(np.array([x]), np.array([y]))[0] and s < end:
                    dwell.append({"aoi": aoi.name, "t_start": s, "t_end": min(s + duration, end)})
            s += duration + spec.transition_s
        position = schedule[-1][:2]

    gaze = pd.concat(frames, ignore_index=True)
    gaze.loc[~gaze["valid"], ["x", "y", "pupil_left", "pupil_right"]] = np.nan
    return gaze, saccades, dwell


def synthesize_pupil(
    t: np.ndarray, params: GenerationParams, noise_sd: float = 0.0, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """Pupil diameter: baseline + sinusoid (+ white noise)."""
    t = np.asarray(t, dtype=float)
    pupil = params.pupil_baseline_mm + params.pupil_sine_mm * np.sin(2.0 * np.pi * params.pupil_sine_hz * t)
    if noise_sd > 0:
        pupil = pupil + rng.normal(0.0, noise_sd, len(t))
    return pupil


# BVP


def synthesize_bvp(
    beat_times: Sequence[float],
    duration_s: float,
    rate_hz: float = 64.0,
    sigma_s: float = 0.08,
    amplitude: Union[float, Sequence[float]] = 1.0,
    noise_sd: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    t0: float = 0.0,
) -> pd.DataFrame:
    """
    Gaussian pulse per beat on a slow baseline (+ white noise).

    Args:
        beat_times: Absolute beat times in seconds
        duration_s: Trace length
        rate_hz: Sampling rate
        sigma_s: Pulse width
        amplitude: Pulse height, scalar or one per beat
        noise_sd: White noise standard deviation
        rng: Random generator (required when noise_sd > 0)
        t0: Time of the first sample

    Returns:
        DataFrame [t, value]
    """
    n = int(round(duration_s * rate_hz))
    t = t0 + np.arange(n) / rate_hz
    value = 0.05 * np.sin(2.0 * np.pi * 0.05 * t)
    amplitudes = np.broadcast_to(np.asarray(amplitude, dtype=float), (len(beat_times),))
    reach = int(np.ceil(5.0 * sigma_s * rate_hz))
    for b, a in zip(beat_times, amplitudes):
        centre = int(round((b - t0) * rate_hz))
        lo, hi = max(0, centre - reach), min(n, centre + reach + 1)
        if lo >= hi:
            continue
        value[lo:hi] += a * np.exp(-0.5 * ((t[lo:hi] - b) / sigma_s) ** 2)
    if noise_sd > 0:
        value = value + rng.normal(0.0, noise_sd, n)
    return pd.DataFrame({"t": t, "value": value})


def _beat_schedule(
    spans: list[PhaseSpan], params: dict[Phase, GenerationParams], rng: np.random.Generator
) -> list[float]:
    """Beat times with a two-level heart-rate switch every HR_SWITCH_PERIOD_S."""
    beats = []
    t = spans[0].t_start + float(rng.uniform(0.1, 0.6))
    end = spans[-1].t_end
    while t < end:
        span = next((s for s in spans if s.t_start <= t < s.t_end), spans[-1])
        p = params[span.phase]
        level = 1.0 if int(t // HR_SWITCH_PERIOD_S) % 2 == 0 else -1.0
        hr = 60.0 / p.ibi_mean_s + level * p.hr_switch_bpm / 2.0
        beats.append(t)
        t += float(np.clip(60.0 / hr + rng.normal(0.0, p.ibi_jitter_s), 0.35, 1.5))
    return beats


# Cohort


def _phase_spans(spec: SynthSpec) -> list[PhaseSpan]:
    spans, t = [], 0.0
    for phase, duration in spec.phase_durations().items():
        spans.append(PhaseSpan(phase, t, t + duration))
        t += duration
    return spans


def generate_participant(spec: SynthSpec, index: int, label: int, out_dir: Union[str, Path]) -> dict:
    """
    Generate and write one participant; returns its truth record.

    Files: <out_dir>/<pid>/{manifest.json, gaze.csv, bvp.csv}.
    """
    pid = participant_ids(spec.n_participants)[index]
    rng = np.random.default_rng(participant_seed(spec.seed, index))
    params = _draw_params(spec, label, rng)
    spans = _phase_spans(spec)

    gaze, saccades, dwell = _gaze_session(spans, params, spec, rng)
    beats = _beat_schedule(spans, params, rng)
    amplitudes = [
        params[next((s.phase for s in spans if s.t_start <= b < s.t_end), spans[-1].phase)].pulse_amplitude
        for b in beats
    ]
    bvp = synthesize_bvp(
        beats, spans[-1].t_end, spec.bvp_rate_hz, spec.pulse_sigma_s, amplitudes,
        spec.bvp_noise if spec.noise else 0.0, rng,
    )

    folder = Path(out_dir) / pid
    try:
        folder.mkdir(parents=True, exist_ok=True)
        write_gaze(gaze, folder / "gaze.csv")
        write_bvp(bvp, folder / "bvp.csv")
        manifest = SessionManifest(
            participant_id=pid,
            label=Label(label),
            geometry=spec.geometry,
            aois=spec.aois,
            phases=tuple(spans),
            gaze_path="gaze.csv",
            bvp_path="bvp.csv",
        )
        manifest.validate()
        write_manifest(manifest, folder / MANIFEST_NAME)
    except OSError as exc:
        raise DataError(f"{pid}: cannot write synthetic session to {folder}: {exc}") from None

    logger.debug("%s: %d saccades, %d beats", pid, len(saccades), len(beats))
    return {
        "label": Label(label).text,
        "params": {phase.value: asdict(params[phase]) for phase in PHASE_ORDER},
        "saccades": saccades,
        "beats": [float(b) for b in beats],
        "aoi_dwell": dwell,
    }


def generate_cohort(spec: SynthSpec, out_dir: Union[str, Path], jobs: int = 1) -> dict:
    """
    Write a synthetic cohort and its truth sidecar.

    Output layout: <out_dir>/<pid>/{manifest.json, gaze.csv, bvp.csv} per
    participant plus <out_dir>/truth.json. Each participant draws from its
    own seed stream, so the bytes do not depend on `jobs`.

    Args:
        spec: Cohort specification
        out_dir: Output directory (created)
        jobs: Parallel participants

    Returns:
        The truth dictionary written to truth.json

    Raises:
        ConfigError: If the spec is invalid
        DataError: If the output path cannot be written
    """
    spec.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out_dir}: {exc}") from None

    labels = assign_labels(spec)
    ids = participant_ids(spec.n_participants)
    records = Parallel(n_jobs=jobs)(
        delayed(generate_participant)(spec, i, labels[pid], out_dir) for i, pid in enumerate(ids)
    )

    truth = {
        "seed": spec.seed,
        "effect_size": spec.effect_size,
        "planted_features": list(spec.planted_features),
        "planted_parameters": spec.planted_parameters,
        "param_sd": PARAM_SD,
        "phase_durations_s": {phase.value: d for phase, d in spec.phase_durations().items()},
        "participants": dict(zip(ids, records)),
    }
    try:
        (out_dir / TRUTH_NAME).write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {out_dir / TRUTH_NAME}: {exc}") from None
    logger.info("wrote %d synthetic participants (%d win) to %s", len(ids), spec.n_wins, out_dir)
    return truth
