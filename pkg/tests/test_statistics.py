"""
Tests for statistics module.
"""

import logging

import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from core.models import Modality
from core.statistics import (
    TestMethod,
    compare_groups,
    levene_variance,
    mann_whitney_u,
    qq_table,
    shapiro_wilk,
    statistical_filter,
    ttest_independent,
    zscore_within_subject,
)
from tests.conftest import make_dataset


def _normal_quantiles(n: int) -> np.ndarray:
    return norm.ppf((np.arange(1, n + 1) - 0.5) / n)


class TestZscoreWithinSubject:
    """Tests for zscore_within_subject function."""

    def test_single_participant(self):
        """Test the hand-evaluated example."""
        df = pd.DataFrame({"participant": ["P1"] * 3, "f": [1.0, 2.0, 3.0]})
        assert zscore_within_subject(df, ["f"])["f"].tolist() == [-1.0, 0.0, 1.0]

    def test_per_participant_statistics(self):
        """Test that each participant is standardised independently."""
        df = pd.DataFrame({
            "participant": ["P1", "P1", "P1", "P2", "P2", "P2"],
            "f": [1.0, 2.0, 3.0, 100.0, 110.0, 120.0],
        })
        z = zscore_within_subject(df, ["f"])
        assert z["f"].tolist() == [-1.0, 0.0, 1.0, -1.0, 0.0, 1.0]
        # Input untouched
        assert df["f"].iloc[3] == 100.0

    def test_zero_variance(self, caplog):
        """Test that a constant feature maps to zeros with a warning."""
        df = pd.DataFrame({"participant": ["P1"] * 3, "f": [5.0, 5.0, 5.0]})
        with caplog.at_level(logging.WARNING):
            z = zscore_within_subject(df, ["f"])
        assert z["f"].tolist() == [0.0, 0.0, 0.0]
        assert "zero variance" in caplog.text

    def test_missing_stays_missing(self):
        """Test that missing values are not imputed."""
        df = pd.DataFrame({"participant": ["P1"] * 4, "f": [1.0, np.nan, 2.0, 3.0]})
        z = zscore_within_subject(df, ["f"])
        assert np.isnan(z["f"].iloc[1])
        assert z["f"].iloc[3] == pytest.approx(1.0)


class TestShapiroWilk:
    """Tests for shapiro_wilk function."""

    def test_three_points(self):
        """Test W for three equally spaced points."""
        result = shapiro_wilk([1.0, 2.0, 3.0])
        assert result.statistic == pytest.approx(1.0)
        assert result.method == TestMethod.SHAPIRO_WILK
        assert result.n1 == 3

    def test_normal_sample(self):
        """Test that a Gaussian sample is not rejected."""
        assert shapiro_wilk(_normal_quantiles(200)).p_value > 0.5

    def test_skewed_sample(self):
        """Test that a strongly skewed sample is rejected."""
        rng = np.random.default_rng(0)
        assert shapiro_wilk(rng.lognormal(0.0, 2.0, size=200)).p_value < 0.01

    def test_too_small(self):
        """Test that n < 3 is rejected."""
        with pytest.raises(ValueError, match="3 <= n <= 5000"):
            shapiro_wilk([1.0, 2.0])

    def test_missing_values_dropped(self):
        """Test that missing values do not count towards n."""
        with pytest.raises(ValueError, match="n=2"):
            shapiro_wilk([1.0, np.nan, 2.0])

    def test_zero_variance(self):
        """Test that a constant sample is rejected."""
        with pytest.raises(ValueError, match="zero-variance"):
            shapiro_wilk([4.0, 4.0, 4.0])


class TestMannWhitneyU:
    """Tests for mann_whitney_u function."""

    def test_exact_small(self):
        """Test the exact p-value of two fully separated triples."""
        result = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert result.p_value == pytest.approx(0.1)
        assert result.statistic == 0.0
        assert (result.n1, result.n2) == (3, 3)

    def test_symmetric(self):
        """Test that swapping the samples gives the same result."""
        a = mann_whitney_u([1.0, 5.0, 7.0, 2.0], [3.0, 4.0, 9.0])
        b = mann_whitney_u([3.0, 4.0, 9.0], [1.0, 5.0, 7.0, 2.0])
        assert a.p_value == pytest.approx(b.p_value)
        assert a.statistic == b.statistic

    def test_exact_close_to_asymptotic(self):
        """Test that the exact and normal-approximation paths agree at n = 20."""
        rng = np.random.default_rng(1)
        x = rng.normal(0.0, 1.0, 20)
        y = rng.normal(0.5, 1.0, 20)
        exact = mann_whitney_u(x, y)
        approx = mann_whitney_u(x, y, exact_if=0)
        assert abs(exact.p_value - approx.p_value) < 0.02

    def test_constant_pooled(self):
        """Test that identical samples give p = 1."""
        assert mann_whitney_u([2.0, 2.0], [2.0, 2.0, 2.0]).p_value == 1.0

    def test_ties_use_asymptotic(self):
        """Test that tied data still returns a valid p-value."""
        result = mann_whitney_u([1, 1, 2, 3], [3, 4, 4, 5])
        assert 0.0 < result.p_value < 1.0

    def test_empty(self):
        """Test that an empty sample is rejected."""
        with pytest.raises(ValueError, match="non-empty"):
            mann_whitney_u([], [1.0])


class TestTTestIndependent:
    """Tests for ttest_independent function."""

    def test_planted_shift(self):
        """Test that a large planted mean shift is detected."""
        rng = np.random.default_rng(2)
        result = ttest_independent(rng.normal(0.0, 1.0, 30), rng.normal(1.5, 1.0, 30))
        assert result.p_value < 0.01
        assert result.statistic < 0
        assert result.method == TestMethod.TTEST_IND

    def test_too_few(self):
        """Test that a single-value group is rejected."""
        with pytest.raises(ValueError, match="at least 2"):
            ttest_independent([1.0], [1.0, 2.0])

    def test_both_constant(self):
        """Test that two constant groups are rejected."""
        with pytest.raises(ValueError, match="zero variance"):
            ttest_independent([1.0, 1.0], [2.0, 2.0])


class TestLeveneVariance:
    """Tests for levene_variance function."""

    def test_unequal_spread(self):
        """Test that very different spreads are detected."""
        rng = np.random.default_rng(3)
        result = levene_variance(rng.normal(0.0, 1.0, 50), rng.normal(0.0, 5.0, 50))
        assert result.p_value < 0.01

    def test_undefined_is_one(self):
        """Test that an undefined statistic reports p = 1."""
        assert levene_variance([1.0, 1.0], [2.0, 2.0]).p_value == 1.0


class TestQqTable:
    """Tests for qq_table function."""

    def test_columns_and_order(self):
        """Test the Q-Q export layout."""
        table = qq_table([3.0, 1.0, 2.0, 5.0])
        assert list(table.columns) == ["theoretical", "empirical", "fit"]
        assert table["empirical"].tolist() == [1.0, 2.0, 3.0, 5.0]
        assert table["theoretical"].is_monotonic_increasing

    def test_too_small(self):
        """Test that one value is not enough."""
        with pytest.raises(ValueError):
            qq_table([1.0])


class TestCompareGroups:
    """Tests for compare_groups function."""

    def test_normal_groups_use_ttest(self):
        """Test that normal groups are compared with Welch's t-test."""
        result = compare_groups(_normal_quantiles(40), _normal_quantiles(40) + 2.0)
        assert result.test.method == TestMethod.TTEST_IND
        assert result.shapiro_p_first >= 0.05

    def test_skewed_groups_use_mann_whitney(self):
        """Test the non-parametric fallback for non-normal data."""
        rng = np.random.default_rng(5)
        result = compare_groups(rng.lognormal(0.0, 2.0, 100), rng.lognormal(1.0, 2.0, 100))
        assert result.test.method == TestMethod.MANN_WHITNEY_U

    def test_tiny_groups(self):
        """Test that untestable normality falls back to Mann-Whitney U."""
        result = compare_groups([1.0, 2.0], [3.0, 4.0])
        assert result.test.method == TestMethod.MANN_WHITNEY_U
        assert np.isnan(result.shapiro_p_first)


class TestStatisticalFilter:
    """Tests for statistical_filter function."""

    def test_separating_feature_first(self):
        """Test that the planted feature ranks first and is significant."""
        dataset = make_dataset(n_win=6, n_loss=6, ocular_signal={"aoi_hand_cards_proportion": 2.0})
        report = statistical_filter(dataset, Modality.OCULAR)

        top = report.iloc[0]
        assert top["feature"] == "aoi_hand_cards_proportion"
        # Full separation of 6 vs 6
        assert top["p"] == pytest.approx(2 / 924)
        assert top["direction"] == "win>loss"
        assert top["group_n"] == "6/6"
        assert bool(top["significant"])
        assert report["p"].is_monotonic_increasing

    def test_columns(self):
        """Test the report layout."""
        report = statistical_filter(make_dataset(), Modality.CARDIAC, features=["hr_mean"])
        assert list(report.columns) == [
            "feature", "group_n", "shapiro_p_win", "shapiro_p_loss", "test",
            "stat", "p", "direction", "levene_p", "significant",
        ]
        assert len(report) == 1

    def test_single_class(self):
        """Test that a one-class cohort is rejected."""
        with pytest.raises(ValueError, match="both win and loss"):
            statistical_filter(make_dataset(n_win=3, n_loss=0), Modality.OCULAR)


class TestMonteCarloCalibration:
    """Repeated-draw checks of test size and power."""

    def test_shapiro_accepts_normal_draws(self):
        """Test that 500 Gaussian draws pass at 0.01 in at least 95 of 100 seeds."""
        passed = sum(
            shapiro_wilk(np.random.default_rng(seed).standard_normal(500)).p_value > 0.01
            for seed in range(100)
        )
        assert passed >= 95

    def test_shapiro_rejects_lognormal_draws(self):
        """Test that 500 draws of exp(normal) fail at 0.01 in at least 95 of 100 seeds."""
        rejected = sum(
            shapiro_wilk(np.exp(np.random.default_rng(seed).standard_normal(500))).p_value < 0.01
            for seed in range(100)
        )
        assert rejected >= 95

    @pytest.mark.parametrize("exact_if", [400, 0])
    def test_mann_whitney_size(self, exact_if):
        """Test that identically distributed groups are rejected at 0.05 about 5% of the time."""
        rejected = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x, y = rng.normal(size=20), rng.normal(size=20)
            rejected += mann_whitney_u(x, y, exact_if=exact_if).p_value < 0.05
        assert rejected <= 12

    def test_mann_whitney_power(self):
        """Test that a one-sd shift between groups of 30 is found in most seeds."""
        found = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            found += mann_whitney_u(rng.normal(0.0, 1.0, 30), rng.normal(1.0, 1.0, 30)).p_value < 0.05
        assert found >= 90
