"""
Tests for the end-to-end behaviour of generation, extraction and LOSO evaluation.
"""

import time

import numpy as np
import pytest

from core.config import PipelineConfig
from core.evaluation import LosoSettings, loso_run
from core.fusion import META_FEATURES, SubjectScore, balanced_accuracy, consensus_fuse
from core.gbdt import GradientBoostedTrees, preset
from core.learners import ModelKind, TrainedModel
from core.models import Dataset, Modality
from core.pipeline import cmd_extract, load_dataset
from core.synthgen import SynthSpec, generate_cohort, plant_separability
from tests.conftest import make_dataset

MINUTES_5 = 300.0


def _run_cohort(spec: SynthSpec, root, modalities: list[Modality]):
    """Generate, extract and evaluate one cohort with the default configuration."""
    config = PipelineConfig()
    generate_cohort(spec, root / "raw", jobs=-1)
    start = time.perf_counter()
    cmd_extract(root / "raw", root / "features", config)
    dataset = load_dataset(root / "features", config)
    reports = loso_run(dataset, LosoSettings.from_config(config), modalities)
    return reports, time.perf_counter() - start


@pytest.mark.slow
class TestSeparability:
    """Tests for planted group differences surviving the whole pipeline."""

    def test_aoi_planted(self, tmp_path):
        """Test that d = 3 on AOI proportions gives an ocular BAcc of at least 0.95."""
        spec = plant_separability(
            SynthSpec(seed=3), ["aoi_hand_cards_proportion", "aoi_potion_bar_proportion"], 3.0
        )
        assert (spec.n_participants, spec.n_wins) == (35, 19)

        reports, elapsed = _run_cohort(spec, tmp_path, [Modality.OCULAR])

        assert reports[Modality.OCULAR].bacc >= 0.95
        assert elapsed < MINUTES_5

    def test_cardiac_planted(self, tmp_path):
        """Test that d = 3 on heart rate separates cardiac and leaves ocular near chance."""
        spec = plant_separability(SynthSpec(seed=7), ["hr_mean"], 3.0)

        reports, elapsed = _run_cohort(spec, tmp_path, [Modality.CARDIAC, Modality.OCULAR])

        assert reports[Modality.CARDIAC].bacc >= 0.90
        assert 0.35 <= reports[Modality.OCULAR].bacc <= 0.65
        assert elapsed < MINUTES_5


@pytest.mark.slow
class TestNullControl:
    """Tests for label-shuffled cohorts."""

    def test_shuffled_labels_near_chance(self, fast_settings):
        """Test mean BAcc in [0.4, 0.6] over 20 shuffles with no seed above 0.8."""
        baccs: dict[Modality, list[float]] = {m: [] for m in Modality}
        for seed in range(20):
            base = make_dataset(n_win=12, n_loss=12, ocular_signal={}, cardiac_signal={}, seed=seed)
            ids = sorted(base.labels)
            shuffled = np.random.default_rng(seed).permutation([base.labels[p] for p in ids])
            dataset = Dataset(labels=dict(zip(ids, shuffled.tolist())), tables=base.tables)
            for modality, report in loso_run(dataset, fast_settings).items():
                baccs[modality].append(report.bacc)

        for modality, values in baccs.items():
            assert len(values) == 20, modality
            assert 0.4 <= np.mean(values) <= 0.6, modality
            assert max(values) <= 0.8, modality


def _always_loss_meta() -> TrainedModel:
    return TrainedModel(
        ModelKind.GBDT,
        list(META_FEATURES),
        GradientBoostedTrees(n_features=2, base_score=-10.0, trees=[]),
        preset("fusion-meta"),
    )


class TestComplementaryFusion:
    """Tests for fusing modalities whose errors fall on different participants."""

    @pytest.fixture
    def scores(self) -> list[tuple[SubjectScore, SubjectScore]]:
        # 20 participants; ocular errs (unsure) on 0-3, cardiac errs (unsure) on 4-7
        pairs = []
        for i in range(20):
            y = i % 2
            sure = 0.9 if y else 0.1
            unsure_wrong = 0.45 if y else 0.55
            p_ocular = unsure_wrong if i < 4 else sure
            p_cardiac = unsure_wrong if 4 <= i < 8 else sure
            pid = f"P{i + 1:03d}"
            pairs.append((
                SubjectScore.decide(pid, Modality.OCULAR, p_ocular, 0.5, y),
                SubjectScore.decide(pid, Modality.CARDIAC, p_cardiac, 0.5, y),
            ))
        return pairs

    @staticmethod
    def _bacc(scores: list[SubjectScore]) -> float:
        return balanced_accuracy([s.y_true for s in scores], [s.y_hat for s in scores])

    def test_fused_beats_both(self, scores):
        """Test that fused BAcc is strictly above each unimodal BAcc."""
        fused = [consensus_fuse(o, c, None, 0.5) for o, c in scores]

        ocular = self._bacc([o for o, _ in scores])
        cardiac = self._bacc([c for _, c in scores])
        assert ocular == pytest.approx(0.8)
        assert cardiac == pytest.approx(0.8)
        assert self._bacc(fused) > max(ocular, cardiac)
        assert self._bacc(fused) == pytest.approx(1.0)

    def test_agreement_dominates(self, scores):
        """Test that every agreeing participant keeps the agreed label under any meta-model."""
        meta = _always_loss_meta()
        agreeing = [(o, c) for o, c in scores if o.y_hat == c.y_hat]
        assert len(agreeing) == 12
        for o, c in agreeing:
            assert consensus_fuse(o, c, meta, 0.5).y_hat == o.y_hat

    def test_consensus_limits_adversarial_meta(self, scores):
        """Test that removing the consensus gate cannot help against a bad meta-model."""
        meta = _always_loss_meta()
        gated = self._bacc([consensus_fuse(o, c, meta, 0.5) for o, c in scores])
        ungated = self._bacc([consensus_fuse(o, c, meta, 0.5, use_consensus=False) for o, c in scores])
        assert ungated <= gated
        assert ungated == pytest.approx(0.5)
