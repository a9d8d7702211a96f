"""
Shared fixtures: small in-memory cohorts and fast learner settings.
"""

from typing import Optional

import numpy as np
import pandas as pd
import pytest

from core.evaluation import LosoSettings
from core.gbdt import GbdtConfig
from core.models import (
    DEFAULT_CARDIAC_FEATURES,
    DEFAULT_OCULAR_FEATURES,
    META_COLUMNS,
    Dataset,
    Modality,
    Phase,
)

FAST_GBDT = GbdtConfig(n_trees=20, max_depth=2, learning_rate=0.3)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end cohort runs (deselect with -m \"not slow\")")


def make_table(
    labels: dict[str, int],
    features: list[str],
    signal: dict[str, float],
    seed: int = 0,
    n_low: int = 6,
    n_high: int = 2,
) -> pd.DataFrame:
    """Window table where each feature in `signal` shifts win windows by the given amount."""
    rng = np.random.default_rng(seed)
    rows = []
    for pid in sorted(labels):
        for phase, n in ((Phase.LOW, n_low), (Phase.HIGH, n_high)):
            for k in range(n):
                row = {
                    "participant": pid,
                    "phase": phase.value,
                    "window_index": k,
                    "t_start": 0.25 * k,
                    "t_end": 0.25 * k + 0.5,
                }
                for name in features:
                    row[name] = rng.normal(0.0, 0.1) + signal.get(name, 0.0) * labels[pid]
                rows.append(row)
    return pd.DataFrame(rows, columns=META_COLUMNS + list(features))


def make_labels(n_win: int, n_loss: int) -> dict[str, int]:
    ids = [f"P{i + 1:03d}" for i in range(n_win + n_loss)]
    return {pid: int(i < n_win) for i, pid in enumerate(ids)}


def make_dataset(
    n_win: int = 4,
    n_loss: int = 4,
    ocular_signal: Optional[dict[str, float]] = None,
    cardiac_signal: Optional[dict[str, float]] = None,
    seed: int = 0,
) -> Dataset:
    labels = make_labels(n_win, n_loss)
    ocular_signal = {"aoi_hand_cards_proportion": 2.0} if ocular_signal is None else ocular_signal
    cardiac_signal = {"hr_mean": 2.0} if cardiac_signal is None else cardiac_signal
    return Dataset(
        labels=labels,
        tables={
            Modality.OCULAR: make_table(labels, DEFAULT_OCULAR_FEATURES, ocular_signal, seed),
            Modality.CARDIAC: make_table(labels, DEFAULT_CARDIAC_FEATURES, cardiac_signal, seed + 1),
        },
    )


@pytest.fixture
def separable_dataset() -> Dataset:
    return make_dataset()


@pytest.fixture
def fast_settings() -> LosoSettings:
    return LosoSettings(
        learner=FAST_GBDT,
        features={
            Modality.OCULAR: list(DEFAULT_OCULAR_FEATURES),
            Modality.CARDIAC: list(DEFAULT_CARDIAC_FEATURES),
        },
        inner_folds=3,
        seed=0,
    )


def write_feature_dir(dataset: Dataset, path) -> None:
    """Write a Dataset in the layout produced by the extract command."""
    path.mkdir(parents=True, exist_ok=True)
    dataset.tables[Modality.OCULAR].to_csv(path / "ocular.csv", index=False)
    dataset.tables[Modality.CARDIAC].to_csv(path / "cardiac.csv", index=False)
    pd.DataFrame({
        "participant": sorted(dataset.labels),
        "label": ["win" if dataset.labels[p] else "loss" for p in sorted(dataset.labels)],
    }).to_csv(path / "labels.csv", index=False)
