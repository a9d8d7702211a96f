"""
Extraction orchestration.

Runs the preprocessing and feature stages for each participant session,
writes the window-level feature tables, and loads them back as a
normalised Dataset for the statistics and evaluation stages.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, TypeVar, Union

import pandas as pd
from joblib import Parallel, delayed

from core.cardiac_features import MIN_DETECTION_S, detect_beats, window_cardiac
from core.config import PipelineConfig
from core.data_loader import discover_manifests, load_bvp, load_gaze, load_manifest
from core.errors import ConfigError, DataError
from core.models import (
    CARDIAC_FEATURES,
    PHASE_ORDER,
    Dataset,
    FeatureWindow,
    Label,
    Modality,
    SessionManifest,
    feature_columns,
    ocular_feature_names,
    windows_to_frame,
)
from core.ocular_features import detect_events, point_velocity, window_ocular
from core.preprocessing import clean_bvp, clean_gaze, clean_pupil, segment_by_phase
from core.statistics import zscore_within_subject

logger = logging.getLogger(__name__)

OCULAR_TABLE = "ocular.csv"
CARDIAC_TABLE = "cardiac.csv"
LABELS_TABLE = "labels.csv"

T = TypeVar("T")


@dataclass
class ParticipantFeatures:
    participant_id: str
    label: Label
    aoi_names: list[str]
    ocular: list[FeatureWindow]
    cardiac: list[FeatureWindow]


def _stage(manifest: SessionManifest, stage: str, fn: Callable[[], T]) -> T:
    """Run one stage, re-raising failures with participant and stage context."""
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, FileNotFoundError) as exc:
        raise DataError(f"{manifest.participant_id}: {stage}: {exc}") from exc


def _ocular_phase(manifest: SessionManifest, phase, samples: pd.DataFrame, config: PipelineConfig) -> list[FeatureWindow]:
    pid = manifest.participant_id
    span = samples["t"].iloc[-1] - samples["t"].iloc[0] if len(samples) > 1 else 0.0
    if span + 1.0 / config.pupil.rate_hz < config.windows.ocular_win_s:
        logger.warning("%s: phase %s too short for an ocular window, skipped", pid, phase.value)
        return []

    pupil = _stage(manifest, f"{phase.value}/pupil", lambda: clean_pupil(
        samples,
        rate_hz=config.pupil.rate_hz,
        max_gap_s=config.interp.max_gap_s,
        order=config.pupil.order,
        cutoff_hz=config.pupil.cutoff_hz,
        zero_phase=config.pupil.zero_phase,
    ))
    gaze = _stage(manifest, f"{phase.value}/gaze", lambda: clean_gaze(samples, manifest.geometry, config.pupil.rate_hz))
    velocity = _stage(manifest, f"{phase.value}/velocity", lambda: point_velocity(
        gaze, manifest.geometry, config.sg.window, config.sg.polyorder
    ))
    events = _stage(manifest, f"{phase.value}/events", lambda: detect_events(
        velocity,
        gaze,
        config.events.vel_threshold_dps,
        config.events.min_fixation_s,
        config.events.min_saccade_s,
        manifest.geometry,
    ))
    return _stage(manifest, f"{phase.value}/ocular-windows", lambda: window_ocular(
        events,
        pupil,
        gaze,
        manifest.aois,
        config.windows.ocular_win_s,
        config.windows.ocular_step_s,
        pid,
        phase,
    ))


def _cardiac_phase(manifest: SessionManifest, phase, samples: pd.DataFrame, config: PipelineConfig) -> list[FeatureWindow]:
    pid = manifest.participant_id
    span = (samples["t"].iloc[-1] - samples["t"].iloc[0] + 1.0 / config.bvp.rate_hz) if len(samples) > 1 else 0.0
    if span < max(config.windows.cardiac_win_s, MIN_DETECTION_S):
        logger.warning("%s: phase %s too short for a cardiac window, skipped", pid, phase.value)
        return []

    bvp = _stage(manifest, f"{phase.value}/bvp", lambda: clean_bvp(
        samples,
        rate_hz=config.bvp.rate_hz,
        order=config.bvp.order,
        cutoff_hz=config.bvp.cutoff_hz,
        zero_phase=config.bvp.zero_phase,
        max_gap_s=config.interp.max_gap_s,
    ))
    beats = _stage(manifest, f"{phase.value}/beats", lambda: detect_beats(
        bvp,
        config.bvp.peak_k,
        config.bvp.threshold_window_s,
        config.bvp.refractory_s,
        config.ibi.min_s,
        config.ibi.max_s,
    ))
    return _stage(manifest, f"{phase.value}/cardiac-windows", lambda: window_cardiac(
        beats, bvp, config.windows.cardiac_win_s, pid, phase
    ))


def extract_participant(manifest: SessionManifest, config: PipelineConfig) -> ParticipantFeatures:
    """
    Ocular and cardiac feature windows for every phase of one session.

    Phases too short for a single window of a modality are skipped with a
    warning.

    Args:
        manifest: Validated session manifest
        config: Pipeline configuration

    Returns:
        ParticipantFeatures

    Raises:
        DataError: Any stage failure, prefixed with "<participant>: <stage>:"
    """
    gaze = _stage(manifest, "load-gaze", lambda: load_gaze(manifest.gaze_path, manifest, config.io.timestamp_jitter_s))
    bvp = _stage(manifest, "load-bvp", lambda: load_bvp(manifest.bvp_path, config.io.timestamp_jitter_s))
    gaze_phases = segment_by_phase(gaze, manifest)
    bvp_phases = segment_by_phase(bvp, manifest)

    ocular: list[FeatureWindow] = []
    cardiac: list[FeatureWindow] = []
    for phase in PHASE_ORDER:
        ocular += _ocular_phase(manifest, phase, gaze_phases[phase], config)
        cardiac += _cardiac_phase(manifest, phase, bvp_phases[phase], config)
    logger.info(
        "%s: %d ocular and %d cardiac windows", manifest.participant_id, len(ocular), len(cardiac)
    )
    return ParticipantFeatures(manifest.participant_id, manifest.label, manifest.aoi_names, ocular, cardiac)


def _extract_path(path: Path, config: PipelineConfig) -> ParticipantFeatures:
    try:
        manifest = load_manifest(path)
    except (DataError, FileNotFoundError) as exc:
        raise DataError(f"{path.parent.name}: manifest: {exc}") from exc
    return extract_participant(manifest, config)


def extract_tables(manifest_dir: Union[str, Path], config: PipelineConfig) -> dict[str, pd.DataFrame]:
    """
    Feature tables for every manifest under a directory.

    Returns:
        {"ocular": ..., "cardiac": ..., "labels": ...} ordered by participant
    """
    paths = discover_manifests(manifest_dir)
    results = Parallel(n_jobs=config.jobs)(delayed(_extract_path)(path, config) for path in paths)
    results = sorted(results, key=lambda r: r.participant_id)

    ids = [r.participant_id for r in results]
    duplicates = sorted({pid for pid in ids if ids.count(pid) > 1})
    if duplicates:
        raise DataError(f"duplicate participant ids: {duplicates}")

    aoi_names: list[str] = []
    for r in results:
        aoi_names += [name for name in r.aoi_names if name not in aoi_names]

    ocular = windows_to_frame([w for r in results for w in r.ocular], ocular_feature_names(aoi_names))
    cardiac = windows_to_frame([w for r in results for w in r.cardiac], CARDIAC_FEATURES)
    labels = pd.DataFrame({"participant": ids, "label": [r.label.text for r in results]})
    return {"ocular": ocular, "cardiac": cardiac, "labels": labels}


def cmd_extract(manifest_dir: Union[str, Path], out_dir: Union[str, Path], config: PipelineConfig) -> dict[str, Path]:
    """
    Write ocular.csv, cardiac.csv and labels.csv for a manifest directory.

    Re-running with the same inputs and configuration rewrites identical
    files.

    Raises:
        DataError: If the directory holds no manifests or a stage fails
    """
    tables = extract_tables(manifest_dir, config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, filename in (("ocular", OCULAR_TABLE), ("cardiac", CARDIAC_TABLE), ("labels", LABELS_TABLE)):
        path = out_dir / filename
        tables[name].to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        written[name] = path
    return written


def _read_table(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise DataError(f"feature table not found: {path}")
    table = pd.read_csv(path, dtype={"participant": str})
    if "participant" not in table.columns:
        raise DataError(f"{path}: no participant column")
    return table


def load_dataset(
    feature_dir: Union[str, Path],
    config: Optional[PipelineConfig] = None,
    modalities: Optional[list[Modality]] = None,
) -> Dataset:
    """
    Load extracted feature tables as a Dataset.

    With normalize.within_subject (default) every feature is z-scored per
    participant across all of their windows in all phases.

    Args:
        feature_dir: Directory written by cmd_extract
        config: Pipeline configuration (defaults when None)
        modalities: Tables to load (default: those present on disk)

    Returns:
        Dataset with labels and one table per modality

    Raises:
        DataError: If labels or a requested table are missing or inconsistent
    """
    config = config or PipelineConfig()
    feature_dir = Path(feature_dir)
    label_table = _read_table(feature_dir / LABELS_TABLE)
    labels = {str(pid): int(Label.parse(text)) for pid, text in zip(label_table["participant"], label_table["label"])}

    files = {Modality.OCULAR: OCULAR_TABLE, Modality.CARDIAC: CARDIAC_TABLE}
    if modalities is None:
        modalities = [m for m, name in files.items() if (feature_dir / name).exists()]
    tables = {}
    for modality in modalities:
        if modality == Modality.FUSED:
            continue
        table = _read_table(feature_dir / files[modality])
        if config.normalize.within_subject and len(table):
            table = zscore_within_subject(table, feature_columns(table))
        tables[modality] = table
    return Dataset(labels=labels, tables=tables)
