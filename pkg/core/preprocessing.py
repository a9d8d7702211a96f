"""
Signal preprocessing module.

Phase segmentation, resampling onto the nominal device grid, gap
interpolation, Butterworth low-pass and Savitzky-Golay filtering, and the
per-modality cleaning chains for pupil, gaze and BVP signals.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.signal import butter, filtfilt, lfilter, lfilter_zi, savgol_filter

from core.errors import DataError
from core.models import PHASE_ORDER, Phase, ScreenGeometry, SessionManifest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CleanSeries:
    """
    Uniformly sampled signal.

    Attributes:
        t: Sample times in seconds, t[0] + i / rate_hz
        v: Values; NaN only where a gap was too long to interpolate
        gap_mask: True on samples that were originally missing
        rate_hz: Sampling rate
        unfilled: (t_start, t_end) of gaps left missing by interpolate_gaps
    """

    t: np.ndarray
    v: np.ndarray
    gap_mask: np.ndarray
    rate_hz: float
    unfilled: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if not (len(self.t) == len(self.v) == len(self.gap_mask)):
            raise ValueError(
                f"Length mismatch: t ({len(self.t)}), v ({len(self.v)}), gap_mask ({len(self.gap_mask)})"
            )
        if self.rate_hz <= 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    @property
    def duration(self) -> float:
        """Covered span, n_samples * dt."""
        return len(self.t) * self.dt

    @classmethod
    def from_values(cls, values, rate_hz: float, t0: float = 0.0) -> "CleanSeries":
        """Wrap raw values on a uniform grid; NaN values are marked as gaps."""
        v = np.asarray(values, dtype=float)
        t = t0 + np.arange(len(v)) / rate_hz
        return cls(t=t, v=v, gap_mask=np.isnan(v), rate_hz=rate_hz)

    def with_values(self, v: np.ndarray) -> "CleanSeries":
        return replace(self, v=np.asarray(v, dtype=float))


@dataclass(frozen=True)
class GazeSeries:
    """Cleaned gaze position on a common grid; gap_mask marks dropped samples."""

    x: CleanSeries
    y: CleanSeries

    @property
    def t(self) -> np.ndarray:
        return self.x.t

    @property
    def valid(self) -> np.ndarray:
        return ~self.x.gap_mask


def segment_by_phase(samples: pd.DataFrame, manifest: SessionManifest) -> dict[Phase, pd.DataFrame]:
    """
    Split a sample table into the three session phases.

    Phase spans are half-open [t_start, t_end). Samples outside every span
    are dropped.

    Args:
        samples: Table with a 't' column (gaze or BVP)
        manifest: Session manifest holding the phase spans

    Returns:
        Dict phase -> samples of that phase (index reset), in phase order

    Raises:
        ValueError: If samples has no 't' column
    """
    if "t" not in samples.columns:
        raise ValueError("samples must contain a 't' column")

    t = samples["t"].to_numpy(dtype=float)
    segments = {}
    for phase in PHASE_ORDER:
        span = manifest.span(phase)
        part = samples.loc[span.contains(t)].reset_index(drop=True)
        if part.empty:
            logger.warning(
                "%s: phase %s [%.3f, %.3f) has no samples",
                manifest.participant_id, phase.value, span.t_start, span.t_end,
            )
        segments[phase] = part
    return segments


def resample_uniform(t: np.ndarray, v: np.ndarray, rate_hz: float) -> CleanSeries:
    """
    Linearly resample irregular samples onto a uniform grid.

    The grid starts at t[0] and advances by 1/rate_hz up to t[-1]. A grid
    point is missing when its nearest raw sample is missing; other points
    are interpolated between the surrounding non-missing samples.

    Args:
        t: Sample times (non-decreasing)
        v: Sample values, NaN = missing
        rate_hz: Nominal device rate

    Returns:
        CleanSeries whose gap_mask marks the missing grid points

    Raises:
        DataError: If fewer than 2 samples or a zero-length span are given
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if len(t) != len(v):
        raise ValueError(f"Length mismatch: t ({len(t)}) != v ({len(v)})")
    if len(t) < 2 or t[-1] <= t[0]:
        raise DataError("resampling needs at least 2 samples spanning a positive duration")

    n = int(np.floor((t[-1] - t[0]) * rate_hz + 1e-6)) + 1
    grid = t[0] + np.arange(n) / rate_hz

    missing = np.isnan(v)
    out = np.full(n, np.nan)
    if (~missing).sum() >= 1:
        out = np.interp(grid, t[~missing], v[~missing])

    idx = np.clip(np.searchsorted(t, grid), 1, len(t) - 1)
    nearest = np.where(grid - t[idx - 1] <= t[idx] - grid, idx - 1, idx)
    gap = missing[nearest]
    out[gap] = np.nan
    return CleanSeries(t=grid, v=out, gap_mask=gap, rate_hz=rate_hz)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) index runs where mask is True."""
    padded = np.concatenate([[False], mask, [False]]).astype(int)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2], edges[1::2]))


def interpolate_gaps(series: CleanSeries, max_gap_s: float) -> CleanSeries:
    """
    Fill missing samples by linear interpolation.

    Interior runs lasting at most max_gap_s (run length * dt) are filled
    linearly between their neighbours. Longer interior runs stay missing,
    are listed in `unfilled` and logged. Leading and trailing runs take the
    nearest valid value. Non-missing samples are never modified.

    Args:
        series: Uniform series, NaN = missing
        max_gap_s: Longest interior gap to fill, in seconds

    Returns:
        CleanSeries with gap_mask = originally missing samples

    Raises:
        DataError: If fewer than 2 non-missing samples exist

    Examples:
        >>> s = interpolate_gaps(CleanSeries.from_values([1, np.nan, 3], 1.0), 1.0)
        >>> s.v
        array([1., 2., 3.])
    """
    v = np.asarray(series.v, dtype=float)
    missing = np.isnan(v)
    valid_idx = np.flatnonzero(~missing)
    if len(valid_idx) < 2:
        raise DataError(f"interpolation needs at least 2 valid samples, got {len(valid_idx)}")

    out = v.copy()
    unfilled = []
    first, last = valid_idx[0], valid_idx[-1]
    out[:first] = v[first]
    out[last + 1:] = v[last]

    for start, end in _runs(missing[first:last + 1]):
        start += first
        end += first
        if (end - start) * series.dt <= max_gap_s + 1e-9:
            out[start:end] = np.interp(
                series.t[start:end],
                [series.t[start - 1], series.t[end]],
                [v[start - 1], v[end]],
            )
        else:
            unfilled.append((float(series.t[start]), float(series.t[end - 1] + series.dt)))

    if unfilled:
        total = sum(b - a for a, b in unfilled)
        logger.warning(
            "%d gap(s) longer than %.3f s left unfilled (%.3f s in total)",
            len(unfilled), max_gap_s, total,
        )

    return replace(
        series,
        v=out,
        gap_mask=missing | series.gap_mask,
        unfilled=tuple(unfilled),
    )


def _check_finite(series: CleanSeries, what: str) -> None:
    if np.isnan(series.v).any():
        raise DataError(f"{what}: series contains missing samples; interpolate first")


def butterworth_lowpass(
    series: CleanSeries,
    order: int,
    cutoff_hz: float,
    zero_phase: bool,
) -> CleanSeries:
    """
    Apply a Butterworth low-pass filter.

    Single-pass filtering starts from the steady state of the first sample,
    so a constant input passes unchanged. Zero-phase filtering runs the
    filter forward and backward with odd (reflective) edge padding of
    3 * (order + 1) samples.

    Args:
        series: Uniform series without missing samples
        order: Filter order (positive, even)
        cutoff_hz: -3 dB frequency of the single-pass filter
        zero_phase: Forward-backward filtering when True

    Returns:
        Filtered CleanSeries (same grid and gap_mask)

    Raises:
        ValueError: If order is not a positive even integer or cutoff_hz
            is not below the Nyquist frequency
        DataError: If the series has missing samples or is shorter than
            the padding length (zero-phase)
    """
    if order <= 0 or order % 2:
        raise ValueError(f"order must be a positive even integer, got {order}")
    nyquist = series.rate_hz / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise ValueError(f"cutoff_hz must be in (0, {nyquist}), got {cutoff_hz}")
    _check_finite(series, "butterworth_lowpass")

    b, a = butter(order, cutoff_hz / nyquist, btype="low")
    v = series.v

    if zero_phase:
        padlen = 3 * (order + 1)
        if len(v) <= padlen:
            raise DataError(
                f"series of {len(v)} samples is too short for zero-phase filtering (padding {padlen})"
            )
        out = filtfilt(b, a, v, padtype="odd", padlen=padlen)
    else:
        out, _ = lfilter(b, a, v, zi=lfilter_zi(b, a) * v[0])

    return series.with_values(out)


def savitzky_golay(series: CleanSeries, window: int = 13, polyorder: int = 3) -> CleanSeries:
    """
    Apply Savitzky-Golay smoothing.

    Each output sample is the value of the least-squares polynomial of
    degree polyorder fitted over the window centred on it. Within half a
    window of either end the window is truncated to the available samples
    and the fit is evaluated at the sample itself.

    Args:
        series: Uniform series without missing samples
        window: Window length in samples (odd)
        polyorder: Polynomial order (below window)

    Returns:
        Smoothed CleanSeries

    Raises:
        ValueError: If window is even or not greater than polyorder
        DataError: If the series is shorter than window or has missing samples
    """
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    if window <= polyorder:
        raise ValueError(f"window ({window}) must be greater than polyorder ({polyorder})")
    if len(series) < window:
        raise DataError(f"series of {len(series)} samples is shorter than the window ({window})")
    _check_finite(series, "savitzky_golay")

    return series.with_values(_savgol_truncated_edges(series.v, window, polyorder))


def _edge_fit(values: np.ndarray, pos: int, polyorder: int) -> float:
    x = np.arange(len(values)) - pos
    deg = min(polyorder, len(values) - 1)
    return float(np.polynomial.polynomial.polyfit(x, values, deg)[0])


def _savgol_truncated_edges(v: np.ndarray, window: int, polyorder: int) -> np.ndarray:
    out = savgol_filter(v, window, polyorder, mode="interp")
    half = window // 2
    n = len(v)
    for i in range(half):
        out[i] = _edge_fit(v[: i + half + 1], i, polyorder)
        j = n - 1 - i
        out[j] = _edge_fit(v[j - half:], half, polyorder)
    return out


def drop_offscreen(samples: pd.DataFrame, geometry: ScreenGeometry) -> pd.DataFrame:
    """
    Remove gaze samples outside the display.

    Keeps rows with 0 <= x < width_px and 0 <= y < height_px; rows with
    missing coordinates are removed as well.

    Args:
        samples: Gaze table with x/y columns
        geometry: Screen geometry

    Returns:
        Retained rows (index reset)
    """
    return samples.loc[_onscreen_mask(samples, geometry)].reset_index(drop=True)


def _onscreen_mask(samples: pd.DataFrame, geometry: ScreenGeometry) -> np.ndarray:
    geometry.validate()
    x = samples["x"].to_numpy(dtype=float)
    y = samples["y"].to_numpy(dtype=float)
    with np.errstate(invalid="ignore"):
        return (x >= 0) & (x < geometry.width_px) & (y >= 0) & (y < geometry.height_px)


def _lowpass_with_gaps(series: CleanSeries, order: int, cutoff_hz: float, zero_phase: bool) -> CleanSeries:
    """Filter a series whose unfilled gaps are bridged for filtering and re-masked after."""
    missing = np.isnan(series.v)
    if not missing.any():
        return butterworth_lowpass(series, order, cutoff_hz, zero_phase)
    bridged = np.interp(series.t, series.t[~missing], series.v[~missing])
    filtered = butterworth_lowpass(series.with_values(bridged), order, cutoff_hz, zero_phase)
    out = filtered.v.copy()
    out[missing] = np.nan
    return filtered.with_values(out)


def clean_pupil(
    samples: pd.DataFrame,
    rate_hz: float = 250.0,
    max_gap_s: float = 0.5,
    order: int = 4,
    cutoff_hz: float = 4.0,
    zero_phase: bool = False,
) -> dict[str, CleanSeries]:
    """
    Pupil cleaning chain: resample, interpolate gaps, low-pass filter.

    An eye with fewer than 2 valid samples yields an all-missing series;
    the binocular average then uses the remaining eye.

    Args:
        samples: Gaze table of one phase
        rate_hz: Nominal eye-tracker rate
        max_gap_s: Longest gap to interpolate
        order, cutoff_hz, zero_phase: Butterworth parameters

    Returns:
        Dict with 'left', 'right' and 'avg' CleanSeries on a common grid

    Raises:
        DataError: If neither eye has usable data
    """
    t = samples["t"].to_numpy(dtype=float)
    cleaned: dict[str, CleanSeries] = {}
    for eye in ("left", "right"):
        raw = resample_uniform(t, samples[f"pupil_{eye}"].to_numpy(dtype=float), rate_hz)
        if (~np.isnan(raw.v)).sum() < 2:
            logger.warning("pupil_%s has no usable samples", eye)
            cleaned[eye] = raw
            continue
        filled = interpolate_gaps(raw, max_gap_s)
        cleaned[eye] = _lowpass_with_gaps(filled, order, cutoff_hz, zero_phase)

    stacked = np.vstack([cleaned["left"].v, cleaned["right"].v])
    if np.isnan(stacked).all():
        raise DataError("no valid pupil samples in either eye")
    avg = _nanmean_columns(stacked)
    cleaned["avg"] = CleanSeries(
        t=cleaned["left"].t,
        v=avg,
        gap_mask=cleaned["left"].gap_mask & cleaned["right"].gap_mask,
        rate_hz=rate_hz,
    )
    return cleaned


def _nanmean_columns(stacked: np.ndarray) -> np.ndarray:
    """Column mean over non-missing rows; all-missing columns stay NaN."""
    counts = (~np.isnan(stacked)).sum(axis=0)
    sums = np.nansum(stacked, axis=0)
    out = np.full(stacked.shape[1], np.nan)
    np.divide(sums, counts, out=out, where=counts > 0)
    return out


def clean_gaze(samples: pd.DataFrame, geometry: ScreenGeometry, rate_hz: float = 250.0) -> GazeSeries:
    """
    Gaze cleaning chain: drop off-screen samples, resample x and y.

    Dropped and invalid samples are bridged by linear interpolation between
    the retained samples and flagged in gap_mask, which downstream code
    uses as the validity mask.

    Args:
        samples: Gaze table of one phase
        geometry: Screen geometry for the off-screen rule
        rate_hz: Nominal eye-tracker rate

    Returns:
        GazeSeries with x and y on the phase grid

    Raises:
        DataError: If fewer than 2 on-screen samples remain
    """
    on_screen = _onscreen_mask(samples, geometry) & samples["valid"].to_numpy(dtype=bool)
    if on_screen.sum() < 2:
        raise DataError(f"only {int(on_screen.sum())} on-screen gaze samples")

    x_raw = np.where(on_screen, samples["x"].to_numpy(dtype=float), np.nan)
    y_raw = np.where(on_screen, samples["y"].to_numpy(dtype=float), np.nan)
    t = samples["t"].to_numpy(dtype=float)

    x = interpolate_gaps(resample_uniform(t, x_raw, rate_hz), np.inf)
    y = interpolate_gaps(resample_uniform(t, y_raw, rate_hz), np.inf)
    return GazeSeries(x=x, y=y)


def clean_bvp(
    samples: pd.DataFrame,
    rate_hz: float = 64.0,
    order: int = 6,
    cutoff_hz: float = 3.0,
    zero_phase: bool = True,
    max_gap_s: float = 0.5,
) -> CleanSeries:
    """
    BVP cleaning chain: resample to the nominal rate, low-pass filter.

    Args:
        samples: BVP table of one phase
        rate_hz: Nominal sensor rate
        order, cutoff_hz, zero_phase: Butterworth parameters
        max_gap_s: Longest resampling gap to bridge

    Returns:
        Filtered CleanSeries
    """
    series = resample_uniform(
        samples["t"].to_numpy(dtype=float), samples["value"].to_numpy(dtype=float), rate_hz
    )
    if series.gap_mask.any():
        series = interpolate_gaps(series, max_gap_s)
        return _lowpass_with_gaps(series, order, cutoff_hz, zero_phase)
    return butterworth_lowpass(series, order, cutoff_hz, zero_phase)
