"""
Tests for cardiac_features module.
"""

import numpy as np
import pytest

from core.cardiac_features import (
    bvp_statistics,
    detect_beats,
    hr_from_ibi,
    hr_range,
    mean_nn,
    nn_ratio,
    pnn,
    rmssd,
    window_cardiac,
)
from core.errors import DataError
from core.models import CARDIAC_FEATURES, Phase
from core.preprocessing import CleanSeries, clean_bvp
from core.synthgen import synthesize_bvp

RATE = 64.0


def _pulse_train(ibi_s: float = 0.8, duration_s: float = 60.0) -> tuple[np.ndarray, CleanSeries]:
    beats = np.arange(0.4, duration_s, ibi_s)
    frame = synthesize_bvp(beats, duration_s, rate_hz=RATE, sigma_s=0.08)
    return beats, clean_bvp(frame, rate_hz=RATE)


class TestDetectBeats:
    """Tests for detect_beats function."""

    def test_constant_ibi(self):
        """Test beat recovery on a constant 0.8 s pulse train."""
        planted, bvp = _pulse_train()
        beats = detect_beats(bvp)

        assert len(planted) == 75
        assert abs(len(beats.beat_times) - 75) <= 1
        np.testing.assert_allclose(beats.ibis, 0.8, atol=0.005)
        assert beats.valid.all()

    def test_beats_increasing(self):
        """Test that beat times are strictly increasing and IBIs consistent."""
        _, bvp = _pulse_train(0.6, 30.0)
        beats = detect_beats(bvp)
        assert np.all(np.diff(beats.beat_times) > 0)
        np.testing.assert_allclose(beats.ibis, np.diff(beats.beat_times))

    def test_ibi_gate(self):
        """Test that intervals outside the physiological gate are flagged."""
        planted = np.array([0.5, 1.3, 2.1, 2.9, 4.5, 5.3, 6.1, 6.9, 7.7, 8.5, 9.3])
        frame = synthesize_bvp(planted, 10.0, rate_hz=RATE, sigma_s=0.08)
        beats = detect_beats(clean_bvp(frame, rate_hz=RATE), ibi_max_s=1.2)
        assert beats.n_flagged == 1
        assert len(beats.nn) == len(beats.ibis) - 1

    def test_too_short(self):
        """Test that less than 5 s of BVP is rejected."""
        with pytest.raises(DataError, match="at least 5"):
            detect_beats(CleanSeries.from_values(np.sin(np.arange(128)), RATE))

    def test_flat_signal(self):
        """Test that a flat signal has no beats."""
        with pytest.raises(DataError, match="no peaks"):
            detect_beats(CleanSeries.from_values(np.zeros(640), RATE))


class TestHrvFormulas:
    """Tests for the HRV formulas."""

    def test_hr_from_ibi(self):
        """Test heart rate as the mean of per-beat rates."""
        assert hr_from_ibi([0.8, 1.0]) == pytest.approx(67.5)
        assert hr_from_ibi([0.8]) == pytest.approx(75.0)

    def test_hr_from_ibi_empty(self):
        """Test that no IBI is an error."""
        with pytest.raises(ValueError):
            hr_from_ibi([])

    def test_rmssd(self):
        """Test RMSSD on a hand-evaluated example."""
        assert rmssd([800, 810, 790]) == pytest.approx(15.811, abs=0.001)

    def test_rmssd_single(self):
        """Test that RMSSD needs two intervals."""
        with pytest.raises(ValueError, match="at least 2"):
            rmssd([800])

    def test_mean_nn(self):
        """Test mean NN."""
        assert mean_nn([800]) == 800.0
        assert mean_nn([800, 820]) == 810.0

    def test_pnn(self):
        """Test pNN50 and pNN20 as fractions of successive differences."""
        nn = [800, 860, 870, 800]
        assert pnn(nn, 50.0) == pytest.approx(2 / 3)
        assert pnn(nn, 20.0) == pytest.approx(2 / 3)
        assert pnn([800, 830], 20.0) == 1.0

    def test_nn_ratio(self):
        """Test RMSSD over mean NN."""
        assert nn_ratio([800, 810, 790]) == pytest.approx(rmssd([800, 810, 790]) / 800.0)

    def test_hr_mean_matches_mean_nn(self):
        """Test hr_mean against 60000 / mean_nn when variability is small."""
        rng = np.random.default_rng(3)
        nn_s = rng.normal(0.8, 0.01, 200)
        hr = hr_from_ibi(nn_s)
        assert abs(hr - 60000.0 / mean_nn(nn_s * 1000)) / hr < 0.01


class TestHrRange:
    """Tests for hr_range function."""

    def test_hr_range(self):
        """Test spread of window heart rates."""
        assert hr_range([70, 75, 90]) == 20.0

    def test_ignores_missing(self):
        """Test that missing windows are skipped."""
        assert hr_range([70, None, np.nan, 80]) == 10.0

    def test_all_missing(self):
        """Test that no value at all is an error."""
        with pytest.raises(ValueError):
            hr_range([None])


class TestBvpStatistics:
    """Tests for bvp_statistics function."""

    def test_std_squared_is_variance(self):
        """Test the amplitude statistics on a known sample."""
        stats = bvp_statistics(np.array([1.0, 2.0, 3.0, 4.0]))
        assert stats["bvp_mean"] == 2.5
        assert stats["bvp_std"] ** 2 == pytest.approx(stats["bvp_variance"], rel=1e-9)
        assert stats["bvp_rms"] == pytest.approx(np.sqrt(7.5))
        assert stats["bvp_skewness"] == pytest.approx(0.0, abs=1e-12)

    def test_constant_window(self):
        """Test that shape statistics are missing on a constant window."""
        stats = bvp_statistics(np.full(10, 0.5))
        assert stats["bvp_skewness"] is None
        assert stats["bvp_kurtosis"] is None
        assert stats["bvp_variance"] == 0.0


class TestWindowCardiac:
    """Tests for window_cardiac function."""

    def test_constant_ibi_windows(self):
        """Test 15 s windows on a 60 s constant-IBI stream."""
        _, bvp = _pulse_train()
        beats = detect_beats(bvp)
        windows = window_cardiac(beats, bvp, 15.0, "P001", Phase.LOW)

        assert len(windows) == 4
        assert [w.window_index for w in windows] == [0, 1, 2, 3]
        for window in windows:
            assert set(window.features) == set(CARDIAC_FEATURES)
            assert window.features["hr_mean"] == pytest.approx(75.0, abs=1.0)
            assert window.features["rmssd"] < 2.0
            assert window.features["hr_range"] < 2.0

    def test_two_level_hr_range(self):
        """Test that a 65/85 bpm switch gives a 20 bpm range in its window only."""
        beats = list(np.arange(0.3, 22.5, 60.0 / 65.0))
        beats += list(np.arange(beats[-1] + 60.0 / 85.0, 60.0, 60.0 / 85.0))
        frame = synthesize_bvp(beats, 60.0, rate_hz=RATE, sigma_s=0.08)
        bvp = clean_bvp(frame, rate_hz=RATE)
        windows = window_cardiac(detect_beats(bvp), bvp, 15.0)
        assert windows[1].features["hr_range"] == pytest.approx(20.0, abs=2.0)
        assert windows[0].features["hr_range"] < 2.0
        assert windows[3].features["hr_range"] < 2.0

    def test_partial_window_dropped(self):
        """Test that only whole windows are emitted."""
        _, bvp = _pulse_train(duration_s=40.0)
        windows = window_cardiac(detect_beats(bvp), bvp, 15.0)
        assert len(windows) == 2

    def test_invalid_window_length(self):
        """Test that a non-positive window length is rejected."""
        _, bvp = _pulse_train(duration_s=10.0)
        with pytest.raises(ValueError, match="win_s"):
            window_cardiac(detect_beats(bvp), bvp, 0.0)
