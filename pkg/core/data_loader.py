"""
Data loader module.

Reads and writes the canonical on-disk formats: per-participant
manifest.json plus gaze and BVP CSV files (UTF-8, header row required).
"""

import json
import logging
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
import pandas as pd

from core.errors import ConfigError, DataError, ParseError
from core.models import (
    AoiRect,
    BvpSample,
    GazeSample,
    Label,
    Phase,
    PhaseSpan,
    ScreenGeometry,
    SessionManifest,
)

logger = logging.getLogger(__name__)

GAZE_COLUMNS = ["t", "x", "y", "pupil_left", "pupil_right", "valid"]
BVP_COLUMNS = ["t", "value"]

# Columns that may be empty in a well-formed row
_GAZE_OPTIONAL = {"x", "y", "pupil_left", "pupil_right"}

MANIFEST_NAME = "manifest.json"

PathLike = Union[str, Path]


def _read_text_table(path: PathLike, columns: list[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"{path.name}: no samples") from None

    if list(raw.columns) != columns:
        raise ParseError(
            f"{path.name}: expected header {','.join(columns)}, got {','.join(raw.columns)}",
            line=1,
        )
    if raw.empty:
        raise DataError(f"{path.name}: no samples")
    return raw


def _parse_numeric(values: pd.Series, column: str, allow_empty: bool) -> np.ndarray:
    """Parse a text column with float(); empty cells become NaN when allowed."""
    out = np.empty(len(values), dtype=float)
    for i, text in enumerate(values):
        text = text.strip()
        if text == "":
            if not allow_empty:
                raise ParseError(f"empty value in column '{column}'", line=i + 2)
            out[i] = np.nan
            continue
        try:
            out[i] = float(text)
        except ValueError:
            raise ParseError(f"cannot parse {column}={text!r}", line=i + 2) from None
    return out


def _check_timestamps(t: np.ndarray, jitter_s: float, name: str) -> np.ndarray:
    """Validate timestamps and return the stable sort order."""
    bad = np.flatnonzero(~np.isfinite(t))
    if len(bad):
        raise ParseError(f"{name}: non-finite timestamp", line=int(bad[0]) + 2)
    backwards = np.flatnonzero(np.diff(t) < -jitter_s)
    if len(backwards):
        row = int(backwards[0]) + 1
        raise ParseError(
            f"{name}: timestamp {t[row]!r} precedes previous sample by more than {jitter_s} s",
            line=row + 2,
        )
    return np.argsort(t, kind="mergesort")


def load_gaze(
    file_or_path: PathLike,
    manifest: Optional[SessionManifest] = None,
    jitter_s: float = 0.001,
) -> pd.DataFrame:
    """
    Load a gaze CSV with columns t,x,y,pupil_left,pupil_right,valid.

    Args:
        file_or_path: Path to the gaze CSV
        manifest: Optional manifest, used for error context only
        jitter_s: Tolerated backwards step between successive timestamps

    Returns:
        DataFrame with GAZE_COLUMNS, sorted by t (stable)
        - valid is boolean
        - rows with valid == False have x/y/pupil set to NaN
        - empty pupil fields are NaN

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError: On a bad header, an unparsable cell (reports the line),
            or timestamps going backwards by more than jitter_s
        DataError: If the file holds no samples
    """
    name = Path(file_or_path).name
    if manifest is not None:
        name = f"{manifest.participant_id}/{name}"
    raw = _read_text_table(file_or_path, GAZE_COLUMNS)

    parsed = {}
    for col in GAZE_COLUMNS[:-1]:
        parsed[col] = _parse_numeric(raw[col], col, allow_empty=col in _GAZE_OPTIONAL)

    valid_text = raw["valid"].str.strip()
    bad = np.flatnonzero(~valid_text.isin(["0", "1"]).to_numpy())
    if len(bad):
        raise ParseError(f"valid must be 0 or 1, got {valid_text.iloc[bad[0]]!r}", line=int(bad[0]) + 2)
    valid = (valid_text == "1").to_numpy()

    order = _check_timestamps(parsed["t"], jitter_s, name)

    df = pd.DataFrame(parsed)
    df["valid"] = valid
    df.loc[~df["valid"], ["x", "y", "pupil_left", "pupil_right"]] = np.nan
    return df.iloc[order].reset_index(drop=True)


def load_bvp(file_or_path: PathLike, jitter_s: float = 0.001) -> pd.DataFrame:
    """
    Load a BVP CSV with columns t,value.

    Args:
        file_or_path: Path to the BVP CSV
        jitter_s: Tolerated backwards step between successive timestamps

    Returns:
        DataFrame with BVP_COLUMNS sorted by t; duplicate timestamps keep file order

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError: On a bad header, unparsable cell or non-monotone timestamps
        DataError: If the file holds no samples
    """
    raw = _read_text_table(file_or_path, BVP_COLUMNS)
    t = _parse_numeric(raw["t"], "t", allow_empty=False)
    value = _parse_numeric(raw["value"], "value", allow_empty=False)
    order = _check_timestamps(t, jitter_s, Path(file_or_path).name)
    df = pd.DataFrame({"t": t, "value": value})
    return df.iloc[order].reset_index(drop=True)


def gaze_samples(df: pd.DataFrame) -> Iterator[GazeSample]:
    """Iterate a loaded gaze table as GazeSample records."""

    def opt(value: float) -> Optional[float]:
        return None if np.isnan(value) else float(value)

    for row in df.itertuples(index=False):
        yield GazeSample(
            t=float(row.t),
            x=opt(row.x),
            y=opt(row.y),
            pupil_left=opt(row.pupil_left),
            pupil_right=opt(row.pupil_right),
            valid=bool(row.valid),
        )


def bvp_samples(df: pd.DataFrame) -> Iterator[BvpSample]:
    for row in df.itertuples(index=False):
        yield BvpSample(t=float(row.t), value=float(row.value))


def write_gaze(df: pd.DataFrame, path: PathLike) -> None:
    """Write a gaze table in the canonical CSV format (missing -> empty field)."""
    out = df[GAZE_COLUMNS].copy()
    out["valid"] = out["valid"].astype(bool).astype(int)
    out.to_csv(path, index=False, na_rep="", encoding="utf-8", lineterminator="\n")


def write_bvp(df: pd.DataFrame, path: PathLike) -> None:
    df[BVP_COLUMNS].to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


def manifest_to_dict(manifest: SessionManifest) -> dict:
    return {
        "participant_id": manifest.participant_id,
        "label": manifest.label.text,
        "geometry": {
            "width_px": manifest.geometry.width_px,
            "height_px": manifest.geometry.height_px,
            "diagonal_mm": manifest.geometry.diagonal_mm,
            "viewing_distance_mm": manifest.geometry.viewing_distance_mm,
        },
        "aois": [
            {"name": a.name, "x0": a.x0, "y0": a.y0, "x1": a.x1, "y1": a.y1}
            for a in manifest.aois
        ],
        "phases": [
            {"phase": s.phase.value, "t_start": s.t_start, "t_end": s.t_end}
            for s in manifest.phases
        ],
        "gaze_path": manifest.gaze_path,
        "bvp_path": manifest.bvp_path,
    }


def write_manifest(manifest: SessionManifest, path: PathLike) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2) + "\n", encoding="utf-8")


def load_manifest(file_or_path: PathLike) -> SessionManifest:
    """
    Load and validate a participant manifest.

    Relative gaze/BVP paths are resolved against the manifest's directory.

    Args:
        file_or_path: Path to manifest.json

    Returns:
        Validated SessionManifest

    Raises:
        FileNotFoundError: If the file does not exist
        DataError: If the JSON is malformed or lacks required keys
        ConfigError: If the manifest violates its invariants
    """
    path = Path(file_or_path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None

    try:
        geometry = ScreenGeometry(**{k: float(v) for k, v in data["geometry"].items()})
        aois = tuple(
            AoiRect(str(a["name"]), float(a["x0"]), float(a["y0"]), float(a["x1"]), float(a["y1"]))
            for a in data.get("aois", [])
        )
        phases = tuple(
            PhaseSpan(Phase(p["phase"]), float(p["t_start"]), float(p["t_end"]))
            for p in data["phases"]
        )
        manifest = SessionManifest(
            participant_id=str(data["participant_id"]),
            label=Label.parse(data["label"]),
            geometry=geometry,
            aois=aois,
            phases=phases,
            gaze_path=str(path.parent / data["gaze_path"]),
            bvp_path=str(path.parent / data["bvp_path"]),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: missing or malformed manifest field {exc}") from None
    except ValueError as exc:
        if isinstance(exc, (DataError, ConfigError)):
            raise
        raise DataError(f"{path}: {exc}") from None

    manifest.validate()
    return manifest


def discover_manifests(root: PathLike) -> list[Path]:
    """
    Find participant manifests below a directory, sorted by path.

    Raises:
        DataError: If no manifest is found
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"manifest directory not found: {root}")
    paths = sorted(root.rglob(MANIFEST_NAME))
    if not paths:
        raise DataError(f"no {MANIFEST_NAME} found under {root}")
    return paths
