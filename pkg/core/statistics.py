"""
Statistics module.

Within-subject normalisation, normality and group-difference tests, the
Q-Q export and the statistical-filtering stage of feature selection.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats as scistats

from core.models import Dataset, Label, Modality, Phase, feature_columns

logger = logging.getLogger(__name__)


class TestMethod(str, Enum):
    __test__ = False

    SHAPIRO_WILK = "ShapiroWilk"
    MANN_WHITNEY_U = "MannWhitneyU"
    TTEST_IND = "TTestInd"
    LEVENE = "LeveneVariance"


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    p_value: float
    method: TestMethod
    n1: int
    n2: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            object.__setattr__(self, "p_value", float(np.clip(self.p_value, 0.0, 1.0)))


def _clean(sample) -> np.ndarray:
    sample = np.asarray(sample, dtype=float)
    return sample[~np.isnan(sample)]


def zscore_within_subject(
    table: pd.DataFrame,
    features: Optional[Sequence[str]] = None,
    participant_col: str = "participant",
) -> pd.DataFrame:
    """
    Standardise each feature within each participant.

    Uses the participant's mean and sample standard deviation (ddof=1)
    across all of their windows. Missing values stay missing. A feature
    with zero (or undefined) variance for a participant maps to zeros and
    logs a warning.

    Args:
        table: Window table with a participant column
        features: Columns to standardise (default: all feature columns)
        participant_col: Participant id column

    Returns:
        Copy of table with standardised feature columns

    Examples:
        >>> df = pd.DataFrame({"participant": ["P1"] * 3, "f": [1.0, 2.0, 3.0]})
        >>> zscore_within_subject(df, ["f"])["f"].tolist()
        [-1.0, 0.0, 1.0]
    """
    features = list(features) if features is not None else feature_columns(table)
    out = table.copy()
    grouped = table.groupby(participant_col, sort=False)[features]
    mean = grouped.transform("mean")
    sd = grouped.transform(lambda s: s.std(ddof=1))

    degenerate = ~(sd > 0)
    z = (table[features] - mean) / sd.where(~degenerate)
    z = z.where(~degenerate, 0.0).where(table[features].notna())

    flagged = degenerate & table[features].notna()
    if flagged.any().any():
        bad = (
            flagged.assign(**{participant_col: table[participant_col]})
            .groupby(participant_col)[features].any()
        )
        for pid, row in bad.iterrows():
            names = [f for f in features if row[f]]
            if names:
                logger.warning("%s: zero variance in %s, z-scores set to 0", pid, ", ".join(names))

    out[features] = z
    return out


def shapiro_wilk(sample: Sequence[float]) -> TestResult:
    """
    Shapiro-Wilk normality test.

    Args:
        sample: Values (missing values dropped)

    Returns:
        TestResult with W as statistic

    Raises:
        ValueError: If n is outside [3, 5000] or the sample has zero variance

    Examples:
        >>> shapiro_wilk([1.0, 2.0, 3.0]).statistic
        1.0
    """
    x = _clean(sample)
    if not 3 <= len(x) <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= 5000, got n={len(x)}")
    if np.ptp(x) == 0:
        raise ValueError("Shapiro-Wilk is undefined for a zero-variance sample")
    w, p = scistats.shapiro(x)
    return TestResult(float(w), float(p), TestMethod.SHAPIRO_WILK, len(x))


def mann_whitney_u(x: Sequence[float], y: Sequence[float], exact_if: int = 400) -> TestResult:
    """
    Two-sided Mann-Whitney U test.

    The p-value is exact (enumeration) when n1 * n2 <= exact_if and the
    pooled sample has no ties; otherwise the normal approximation with tie
    and continuity correction is used. The reported statistic is
    min(U1, U2).

    Args:
        x: First sample
        y: Second sample
        exact_if: Largest n1 * n2 for the exact path

    Returns:
        TestResult

    Raises:
        ValueError: If either sample is empty

    Examples:
        >>> mann_whitney_u([1, 2, 3], [4, 5, 6]).p_value
        0.1
    """
    x = _clean(x)
    y = _clean(y)
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("Mann-Whitney U needs non-empty samples")

    pooled = np.concatenate([x, y])
    if np.ptp(pooled) == 0:
        return TestResult(n1 * n2 / 2.0, 1.0, TestMethod.MANN_WHITNEY_U, n1, n2)

    has_ties = len(np.unique(pooled)) < len(pooled)
    method = "exact" if n1 * n2 <= exact_if and not has_ties else "asymptotic"
    res = scistats.mannwhitneyu(x, y, alternative="two-sided", method=method, use_continuity=True)
    u1 = float(res.statistic)
    return TestResult(min(u1, n1 * n2 - u1), min(float(res.pvalue), 1.0), TestMethod.MANN_WHITNEY_U, n1, n2)


def ttest_independent(x: Sequence[float], y: Sequence[float], equal_var: bool = False) -> TestResult:
    """
    Independent-samples t-test (Welch by default).

    Raises:
        ValueError: If a sample has fewer than 2 values or both have zero variance
    """
    x = _clean(x)
    y = _clean(y)
    if len(x) < 2 or len(y) < 2:
        raise ValueError(f"t-test needs at least 2 values per group, got {len(x)} and {len(y)}")
    if np.ptp(x) == 0 and np.ptp(y) == 0:
        raise ValueError("t-test is undefined when both samples have zero variance")
    t, p = scistats.ttest_ind(x, y, equal_var=equal_var)
    return TestResult(float(t), float(p), TestMethod.TTEST_IND, len(x), len(y))


def levene_variance(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Levene's test for equal variances (median-centred, Brown-Forsythe)."""
    x = _clean(x)
    y = _clean(y)
    if len(x) < 2 or len(y) < 2:
        raise ValueError(f"Levene's test needs at least 2 values per group, got {len(x)} and {len(y)}")
    stat, p = scistats.levene(x, y, center="median")
    if np.isnan(p):
        return TestResult(0.0, 1.0, TestMethod.LEVENE, len(x), len(y))
    return TestResult(float(stat), float(p), TestMethod.LEVENE, len(x), len(y))


def qq_table(sample: Sequence[float]) -> pd.DataFrame:
    """
    Normal Q-Q plot data.

    Returns:
        DataFrame [theoretical, empirical, fit] with the least-squares line
        through the points in 'fit'
    """
    x = _clean(sample)
    if len(x) < 2:
        raise ValueError("Q-Q table needs at least 2 values")
    (osm, osr), (slope, intercept, _) = scistats.probplot(x, dist="norm")
    return pd.DataFrame({"theoretical": osm, "empirical": osr, "fit": slope * osm + intercept})


def _shapiro_p(sample: np.ndarray) -> float:
    try:
        return shapiro_wilk(sample).p_value
    except ValueError:
        return np.nan


@dataclass(frozen=True)
class GroupComparison:
    test: TestResult
    shapiro_p_first: float
    shapiro_p_second: float


def compare_groups(x: Sequence[float], y: Sequence[float], alpha: float = 0.05) -> GroupComparison:
    """
    Compare two groups with the test chosen by Shapiro-Wilk.

    Both groups normal (p >= alpha) -> Welch t-test; otherwise, or when
    normality cannot be assessed, Mann-Whitney U.
    """
    x = _clean(x)
    y = _clean(y)
    p_x = _shapiro_p(x)
    p_y = _shapiro_p(y)
    both_normal = p_x >= alpha and p_y >= alpha
    test = None
    if both_normal:
        try:
            test = ttest_independent(x, y)
        except ValueError:
            test = None
    if test is None:
        test = mann_whitney_u(x, y)
    return GroupComparison(test=test, shapiro_p_first=p_x, shapiro_p_second=p_y)


def participant_means(
    dataset: Dataset,
    modality: Modality,
    features: Optional[Sequence[str]] = None,
    phase: Phase = Phase.LOW,
) -> pd.DataFrame:
    """Mean of each participant's windows in `phase`, one row per participant."""
    table = dataset.select(modality, dataset.participants, phase)
    features = list(features) if features is not None else feature_columns(table)
    return table.groupby("participant")[features].mean()


def statistical_filter(
    dataset: Dataset,
    modality: Modality,
    alpha: float = 0.05,
    features: Optional[Sequence[str]] = None,
    phase: Phase = Phase.LOW,
) -> pd.DataFrame:
    """
    Rank features by how well they separate win and loss participants.

    Each participant contributes the mean of their windows in `phase`. Per
    feature: Shapiro-Wilk p per group, Mann-Whitney U p, Levene p and the
    effect direction. Rows are sorted by p ascending (missing p last).

    Args:
        dataset: Dataset with labels and window tables
        modality: Table to analyse
        alpha: Significance level recorded in the 'significant' column
        features: Columns to test (default: all feature columns)
        phase: Phase whose windows are averaged

    Returns:
        DataFrame [feature, group_n, shapiro_p_win, shapiro_p_loss, test,
        stat, p, direction, levene_p, significant]; one row per feature

    Raises:
        ValueError: If both label groups are not present
    """
    labels = dataset.labels
    if set(labels[p] for p in dataset.participants) != {0, 1}:
        raise ValueError("statistical filtering needs both win and loss participants")

    means = participant_means(dataset, modality, features, phase)
    features = list(means.columns)
    win = means[means.index.map(lambda p: labels[p] == Label.WIN)]
    loss = means[means.index.map(lambda p: labels[p] == Label.LOSS)]

    rows = []
    for feature in features:
        a = _clean(win[feature])
        b = _clean(loss[feature])
        row = {
            "feature": feature,
            "group_n": f"{len(a)}/{len(b)}",
            "shapiro_p_win": _shapiro_p(a),
            "shapiro_p_loss": _shapiro_p(b),
            "test": TestMethod.MANN_WHITNEY_U.value,
            "stat": np.nan,
            "p": np.nan,
            "direction": "none",
            "levene_p": np.nan,
        }
        if len(a) and len(b):
            res = mann_whitney_u(a, b)
            row["stat"] = res.statistic
            row["p"] = res.p_value
            diff = a.mean() - b.mean()
            row["direction"] = "win>loss" if diff > 0 else "win<loss" if diff < 0 else "none"
        if len(a) >= 2 and len(b) >= 2:
            row["levene_p"] = levene_variance(a, b).p_value
        rows.append(row)

    report = pd.DataFrame(rows)
    report["significant"] = report["p"] < alpha
    return report.sort_values("p", kind="mergesort", na_position="last").reset_index(drop=True)
