"""
Cardiac feature extraction.

Beat detection on filtered BVP, inter-beat interval gating, time-domain
HRV indices and the non-overlapping 15 s cardiac feature windows.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.signal import find_peaks
from scipy.stats import kurtosis, skew

from core.errors import DataError
from core.models import FeatureWindow, Phase
from core.preprocessing import CleanSeries

logger = logging.getLogger(__name__)

MIN_DETECTION_S = 5.0


@dataclass(frozen=True)
class BeatSeries:
    """
    Detected beats.

    Attributes:
        beat_times: Strictly increasing beat times in seconds
        ibis: ibis[i] = beat_times[i + 1] - beat_times[i]
        valid: True where ibis[i] lies inside the physiological gate
    """

    beat_times: np.ndarray
    ibis: np.ndarray
    valid: np.ndarray

    @property
    def nn(self) -> np.ndarray:
        """Gated intervals in seconds."""
        return self.ibis[self.valid]

    @property
    def n_flagged(self) -> int:
        return int((~self.valid).sum())


def detect_beats(
    bvp: CleanSeries,
    peak_k: float = 0.5,
    threshold_window_s: float = 2.0,
    refractory_s: float = 0.27,
    ibi_min_s: float = 0.27,
    ibi_max_s: float = 2.0,
) -> BeatSeries:
    """
    Detect systolic peaks in a filtered BVP signal.

    A peak is a local maximum above the adaptive threshold
    rolling_mean + peak_k * rolling_sd (centred window of
    threshold_window_s), at least refractory_s after the previous peak.
    Peak times are refined by parabolic interpolation. IBIs outside
    [ibi_min_s, ibi_max_s] are flagged invalid.

    Args:
        bvp: Filtered BVP series (no missing samples)
        peak_k: Threshold multiplier of the rolling standard deviation
        threshold_window_s: Rolling window length in seconds
        refractory_s: Minimum spacing between beats
        ibi_min_s: Shortest physiological IBI
        ibi_max_s: Longest physiological IBI

    Returns:
        BeatSeries

    Raises:
        DataError: If the series is shorter than 5 s or has no peaks
    """
    if bvp.duration < MIN_DETECTION_S - 1e-9:
        raise DataError(f"beat detection needs at least {MIN_DETECTION_S} s of BVP, got {bvp.duration:.2f} s")
    v = np.asarray(bvp.v, dtype=float)
    if np.isnan(v).any():
        raise DataError("BVP series contains missing samples")
    if np.ptp(v) <= 1e-12 * max(1.0, float(np.abs(v).max())):
        raise DataError("no peaks found in BVP signal")

    fs = bvp.rate_hz
    window = max(int(round(threshold_window_s * fs)), 1)
    rolling = pd.Series(v).rolling(window=window, center=True, min_periods=1)
    threshold = (rolling.mean() + peak_k * rolling.std(ddof=0)).to_numpy()

    distance = max(int(round(refractory_s * fs)), 1)
    peaks, _ = find_peaks(v, height=threshold, distance=distance)
    if len(peaks) == 0:
        raise DataError("no peaks found in BVP signal")

    beat_times = bvp.t[peaks].astype(float)
    inner = (peaks > 0) & (peaks < len(v) - 1)
    i = peaks[inner]
    denom = v[i - 1] - 2.0 * v[i] + v[i + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(denom != 0, 0.5 * (v[i - 1] - v[i + 1]) / denom, 0.0)
    beat_times[inner] += delta * bvp.dt

    ibis = np.diff(beat_times)
    valid = (ibis >= ibi_min_s) & (ibis <= ibi_max_s)
    beats = BeatSeries(beat_times=beat_times, ibis=ibis, valid=valid)
    if beats.n_flagged:
        logger.info("%d of %d IBIs outside [%.2f, %.2f] s flagged", beats.n_flagged, len(ibis), ibi_min_s, ibi_max_s)
    return beats


def hr_from_ibi(ibis: Sequence[float]) -> float:
    """
    Mean heart rate over per-beat 60 / IBI values.

    Args:
        ibis: Inter-beat intervals in seconds

    Returns:
        Heart rate in bpm

    Raises:
        ValueError: If no IBI is given

    Examples:
        >>> hr_from_ibi([0.8, 1.0])
        67.5
    """
    ibis = np.asarray(ibis, dtype=float)
    if len(ibis) == 0:
        raise ValueError("hr_from_ibi needs at least one IBI")
    return float(np.mean(60.0 / ibis))


def rmssd(nn: Sequence[float]) -> float:
    """
    Root mean square of successive NN differences.

    Args:
        nn: NN intervals in ms

    Returns:
        RMSSD in ms

    Raises:
        ValueError: If fewer than 2 intervals are given

    Examples:
        >>> round(rmssd([800, 810, 790]), 3)
        15.811
    """
    nn = np.asarray(nn, dtype=float)
    if len(nn) < 2:
        raise ValueError(f"rmssd needs at least 2 NN intervals, got {len(nn)}")
    return float(np.sqrt(np.mean(np.diff(nn) ** 2)))


def mean_nn(nn: Sequence[float]) -> float:
    nn = np.asarray(nn, dtype=float)
    if len(nn) == 0:
        raise ValueError("mean_nn needs at least one NN interval")
    return float(np.mean(nn))


def pnn(nn: Sequence[float], threshold_ms: float = 50.0) -> float:
    """Fraction of successive NN differences larger than threshold_ms."""
    nn = np.asarray(nn, dtype=float)
    if len(nn) < 2:
        raise ValueError(f"pnn needs at least 2 NN intervals, got {len(nn)}")
    return float(np.mean(np.abs(np.diff(nn)) > threshold_ms))


def nn_ratio(nn: Sequence[float]) -> float:
    """RMSSD relative to mean NN."""
    return rmssd(nn) / mean_nn(nn)


def hr_range(hr_values: Sequence[Optional[float]]) -> float:
    """
    Spread of heart rate values: max - min, ignoring missing values.

    Raises:
        ValueError: If no heart rate value is available

    Examples:
        >>> hr_range([70, 75, 90])
        20.0
    """
    values = np.array([np.nan if v is None else v for v in hr_values], dtype=float)
    values = values[~np.isnan(values)]
    if len(values) == 0:
        raise ValueError("hr_range needs at least one heart rate value")
    return float(values.max() - values.min())


def bvp_statistics(values: np.ndarray) -> dict[str, Optional[float]]:
    """
    Amplitude statistics of BVP samples.

    std and variance divide by N; kurtosis is excess kurtosis (Gaussian -> 0).
    Skewness and kurtosis are missing for a constant window.
    """
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    if len(values) == 0:
        return {name: None for name in
                ("bvp_min", "bvp_max", "bvp_mean", "bvp_std", "bvp_variance", "bvp_rms",
                 "bvp_skewness", "bvp_kurtosis")}
    variance = float(np.var(values))
    shaped = variance > 0
    return {
        "bvp_min": float(values.min()),
        "bvp_max": float(values.max()),
        "bvp_mean": float(values.mean()),
        "bvp_std": math.sqrt(variance),
        "bvp_variance": variance,
        "bvp_rms": float(np.sqrt(np.mean(values ** 2))),
        "bvp_skewness": float(skew(values, bias=True)) if shaped else None,
        "bvp_kurtosis": float(kurtosis(values, fisher=True, bias=True)) if shaped else None,
    }


def _hrv_features(nn_s: np.ndarray) -> dict[str, Optional[float]]:
    nn_ms = nn_s * 1000.0
    out: dict[str, Optional[float]] = dict.fromkeys(
        ["hr_mean", "mean_nn", "rmssd", "pnn50", "pnn20", "nn_ratio"]
    )
    if len(nn_ms) >= 1:
        out["hr_mean"] = hr_from_ibi(nn_s)
        out["mean_nn"] = mean_nn(nn_ms)
    if len(nn_ms) >= 2:
        out["rmssd"] = rmssd(nn_ms)
        out["pnn50"] = pnn(nn_ms, 50.0)
        out["pnn20"] = pnn(nn_ms, 20.0)
        out["nn_ratio"] = nn_ratio(nn_ms)
    return out


def window_cardiac(
    beats: BeatSeries,
    bvp: CleanSeries,
    win_s: float = 15.0,
    participant_id: str = "",
    phase: Phase = Phase.LOW,
) -> list[FeatureWindow]:
    """
    Compute cardiac feature vectors over non-overlapping windows.

    Window k covers [t0 + k * win_s, t0 + (k + 1) * win_s) and only windows
    that fit entirely in the series are emitted. An IBI belongs to a window
    when both of its beats do; only gated (NN) intervals are used. Windows
    with fewer than 2 beats carry missing HRV features. hr_range is the
    spread of the per-beat heart rates 60 / NN inside the window.

    Args:
        beats: Beats detected on the same series
        bvp: Filtered BVP series
        win_s: Window length in seconds
        participant_id: Id stamped on each window
        phase: Phase stamped on each window

    Returns:
        Feature windows in time order
    """
    if win_s <= 0:
        raise ValueError(f"win_s must be positive, got {win_s}")

    t0 = float(bvp.t[0])
    n_windows = int(math.floor(bvp.duration / win_s + 1e-9))
    bt = beats.beat_times

    windows = []
    for k in range(n_windows):
        a = t0 + k * win_s
        b = a + win_s
        in_win = (bt >= a) & (bt < b)
        pair = in_win[:-1] & in_win[1:] & beats.valid
        nn = beats.ibis[pair] if in_win.sum() >= 2 else np.array([])
        feats = _hrv_features(nn)
        feats["hr_range"] = hr_range(60.0 / nn) if len(nn) else None
        sel = (bvp.t >= a - 1e-9) & (bvp.t < b - 1e-9)
        feats.update(bvp_statistics(bvp.v[sel]))
        windows.append(FeatureWindow(
            participant_id=participant_id,
            phase=phase,
            window_index=k,
            t_start=a,
            t_end=b,
            features=feats,
        ))
    return windows
