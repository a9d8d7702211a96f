"""
Tests for ocular_features module.
"""

import numpy as np
import pandas as pd
import pytest

from core.errors import DataError
from core.models import AoiRect, Phase, ScreenGeometry, ocular_feature_names
from core.ocular_features import (
    EventKind,
    detect_events,
    phase_feature_summary,
    point_velocity,
    visual_angle_deg,
    window_count,
    window_ocular,
)
from core.preprocessing import CleanSeries, GazeSeries
from core.synthgen import synthesize_gaze_trace

GEOMETRY = ScreenGeometry(1920, 1080, 604.52, 600.0)
RATE = 250.0

FIXATIONS = [
    (400.0, 300.0, 0.248),
    (700.0, 300.0, 0.26),
    (700.0, 600.0, 0.30),
    (1000.0, 800.0, 0.26),
    (800.0, 500.0, 0.22),
    (1200.0, 500.0, 0.248),
]


def _gaze(trace: pd.DataFrame) -> GazeSeries:
    x = CleanSeries.from_values(trace["x"].to_numpy(), RATE, float(trace["t"].iloc[0]))
    y = CleanSeries.from_values(trace["y"].to_numpy(), RATE, float(trace["t"].iloc[0]))
    return GazeSeries(x=x, y=y)


def _constant_gaze(n: int, x: float = 960.0, y: float = 900.0) -> GazeSeries:
    return GazeSeries(
        x=CleanSeries.from_values(np.full(n, x), RATE),
        y=CleanSeries.from_values(np.full(n, y), RATE),
    )


class TestVisualAngle:
    """Tests for visual_angle_deg function."""

    def test_hundred_pixels(self):
        """Test the angle of a 100 px step at 600 mm."""
        theta = visual_angle_deg(100.0, GEOMETRY)
        assert theta == pytest.approx(2.620, abs=0.01)
        # One 100 px step per 4 ms sample
        assert theta / 0.004 == pytest.approx(655.0, abs=3.0)

    def test_double_distance_halves_angle(self):
        """Test the small-angle scaling with viewing distance."""
        far = ScreenGeometry(1920, 1080, 604.52, 1200.0)
        near_theta = visual_angle_deg(10.0, GEOMETRY)
        far_theta = visual_angle_deg(10.0, far)
        assert far_theta == pytest.approx(near_theta / 2.0, rel=0.01)


class TestPointVelocity:
    """Tests for point_velocity function."""

    def test_constant_gaze_is_still(self):
        """Test that a constant gaze position has zero velocity."""
        v = point_velocity(_constant_gaze(100), GEOMETRY)
        np.testing.assert_allclose(v.v, 0.0, atol=1e-9)

    def test_uniform_motion(self):
        """Test velocity of a uniform sweep."""
        n = 100
        gaze = GazeSeries(
            x=CleanSeries.from_values(100.0 + 100.0 * np.arange(n), RATE),
            y=CleanSeries.from_values(np.full(n, 500.0), RATE),
        )
        v = point_velocity(gaze, GEOMETRY)
        np.testing.assert_allclose(v.v, visual_angle_deg(100.0, GEOMETRY) * RATE, rtol=1e-9)

    def test_too_short(self):
        """Test that a single sample has no velocity."""
        with pytest.raises(DataError, match="at least 2"):
            point_velocity(_constant_gaze(1), GEOMETRY)


class TestDetectEvents:
    """Tests for detect_events function."""

    def test_planted_saccades(self):
        """Test recovery of planted saccades on a noiseless trace."""
        trace, planted = synthesize_gaze_trace(FIXATIONS, rate_hz=RATE, transition_s=0.04)
        gaze = _gaze(trace)
        events = detect_events(point_velocity(gaze, GEOMETRY), gaze, 30.0, 0.060, 0.010, GEOMETRY)

        saccades = [e for e in events if e.kind == EventKind.SACCADE]
        fixations = [e for e in events if e.kind == EventKind.FIXATION]
        assert len(planted) == 5
        assert len(saccades) == 5
        assert len(fixations) == 6

        for event, truth in zip(saccades, planted):
            expected = visual_angle_deg(truth["amplitude_px"], GEOMETRY)
            assert event.amplitude_deg == pytest.approx(expected, abs=0.05)
            assert event.t_start <= truth["t_start"] + 1e-9
            assert event.t_end >= truth["t_end"] - 1e-9

    def test_events_tile_span(self):
        """Test that events alternate and cover the trace without gaps."""
        trace, _ = synthesize_gaze_trace(FIXATIONS, rate_hz=RATE)
        gaze = _gaze(trace)
        events = detect_events(point_velocity(gaze, GEOMETRY), gaze, geometry=GEOMETRY)

        assert events[0].start_index == 0
        assert events[-1].end_index == len(trace)
        for first, second in zip(events, events[1:]):
            assert first.end_index == second.start_index
            assert first.kind != second.kind

    def test_constant_trace_single_fixation(self):
        """Test that a still trace is one fixation."""
        gaze = _constant_gaze(500)
        events = detect_events(point_velocity(gaze, GEOMETRY), gaze, geometry=GEOMETRY)
        assert len(events) == 1
        assert events[0].kind == EventKind.FIXATION
        assert events[0].duration == pytest.approx(2.0)

    def test_no_geometry_no_amplitude(self):
        """Test that amplitudes are omitted without a geometry."""
        trace, _ = synthesize_gaze_trace(FIXATIONS, rate_hz=RATE)
        gaze = _gaze(trace)
        events = detect_events(point_velocity(gaze, GEOMETRY), gaze)
        assert all(e.amplitude_deg is None for e in events)

    def test_misaligned(self):
        """Test that velocity and gaze must share a grid."""
        with pytest.raises(DataError, match="aligned"):
            detect_events(CleanSeries.from_values(np.zeros(10), RATE), _constant_gaze(20))


class TestWindowCount:
    """Tests for window_count function."""

    def test_two_seconds(self):
        """Test 0.5 s windows stepped by 0.25 s over 2 s."""
        assert window_count(2.0, 0.5, 0.25) == 7

    def test_shorter_than_window(self):
        """Test that a span shorter than a window yields none."""
        assert window_count(0.4, 0.5, 0.25) == 0

    def test_exact_window(self):
        """Test that a span equal to the window yields one."""
        assert window_count(0.5, 0.5, 0.25) == 1


class TestWindowOcular:
    """Tests for window_ocular function."""

    def _pupil(self, n: int) -> dict:
        return {
            "left": CleanSeries.from_values(np.full(n, 3.4), RATE),
            "right": CleanSeries.from_values(np.full(n, 3.6), RATE),
            "avg": CleanSeries.from_values(np.full(n, 3.5), RATE),
        }

    def test_constant_gaze_in_aoi(self):
        """Test features of a still gaze inside one AOI."""
        n = 500
        gaze = _constant_gaze(n)
        events = detect_events(point_velocity(gaze, GEOMETRY), gaze, geometry=GEOMETRY)
        aois = [AoiRect("hand_cards", 560, 780, 1360, 1080), AoiRect("potion_bar", 620, 0, 1000, 80)]

        windows = window_ocular(events, self._pupil(n), gaze, aois, 0.5, 0.25, "P001", Phase.LOW)

        assert len(windows) == 7
        first = windows[0].features
        assert set(first) == set(ocular_feature_names(["hand_cards", "potion_bar"]))
        assert first["pupil_avg_mean"] == pytest.approx(3.5)
        assert first["pupil_left_std"] == pytest.approx(0.0)
        assert first["aoi_hand_cards_proportion"] == 1.0
        assert first["aoi_hand_cards_rate"] == 2.0
        assert first["aoi_potion_bar_proportion"] == 0.0
        assert first["saccade_count_mean"] == 0.0
        assert first["fixation_count"] == 1.0
        assert windows[1].features["fixation_count"] == 0.0
        assert first["saccade_fixation_ratio"] == 0.0
        assert windows[3].t_start == pytest.approx(0.75)
        assert all(w.phase == Phase.LOW and w.participant_id == "P001" for w in windows)

    def test_window_without_valid_gaze(self):
        """Test that a window with no valid gaze keeps only pupil features."""
        n = 500
        x = CleanSeries.from_values(np.full(n, 960.0), RATE)
        mask = np.zeros(n, dtype=bool)
        mask[:125] = True
        gaze = GazeSeries(
            x=CleanSeries(t=x.t, v=x.v, gap_mask=mask, rate_hz=RATE),
            y=CleanSeries(t=x.t, v=np.full(n, 900.0), gap_mask=mask, rate_hz=RATE),
        )
        events = detect_events(point_velocity(gaze, GEOMETRY), gaze, geometry=GEOMETRY)
        aois = [AoiRect("hand_cards", 560, 780, 1360, 1080)]

        windows = window_ocular(events, self._pupil(n), gaze, aois)

        assert windows[0].features["aoi_hand_cards_proportion"] is None
        assert windows[0].features["saccade_rate"] is None
        assert windows[0].features["pupil_avg_mean"] == pytest.approx(3.5)
        assert windows[1].features["aoi_hand_cards_proportion"] == 1.0

    def test_short_span(self):
        """Test that a span shorter than one window yields no windows."""
        gaze = _constant_gaze(100)
        events = detect_events(point_velocity(gaze, GEOMETRY), gaze)
        assert window_ocular(events, self._pupil(100), gaze, []) == []


class TestPhaseFeatureSummary:
    """Tests for phase_feature_summary function."""

    def test_group_means(self):
        """Test that group statistics are taken over participant means."""
        windows = pd.DataFrame({
            "participant": ["A", "A", "B", "C"],
            "phase": ["LowComplexity"] * 4,
            "window_index": [0, 1, 0, 0],
            "t_start": [0.0, 0.25, 0.0, 0.0],
            "t_end": [0.5, 0.75, 0.5, 0.5],
            "f": [1.0, 3.0, 4.0, 10.0],
        })
        summary = phase_feature_summary(windows, {"A": 1, "B": 1, "C": 0}, ["f"])

        win = summary[summary["group"] == "win"].iloc[0]
        loss = summary[summary["group"] == "loss"].iloc[0]
        # Participant A averages to 2.0
        assert win["mean"] == pytest.approx(3.0)
        assert win["sem"] == pytest.approx(np.std([2.0, 4.0], ddof=1) / np.sqrt(2))
        assert win["n"] == 2
        assert loss["mean"] == 10.0
        assert np.isnan(loss["sem"])

    def test_unlabelled_participant(self):
        """Test that every participant needs a label."""
        windows = pd.DataFrame({"participant": ["Z"], "phase": ["LowComplexity"], "f": [1.0]})
        with pytest.raises(ValueError, match="without labels"):
            phase_feature_summary(windows, {}, ["f"])
