"""
Tests for the command-line front-end.
"""

import json

import pandas as pd
import pytest

import app
import cli.commands as commands
import core.evaluation as evaluation
from core.learners import LinearConfig, ModelKind, load_model
from tests.conftest import FAST_GBDT, make_dataset, write_feature_dir

FAST_CONFIG = {"jobs": 1, "normalize": {"within_subject": False}, "model": {"learner": "linear_margin"}}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(FAST_CONFIG))
    return path


@pytest.fixture
def feature_dir(tmp_path):
    path = tmp_path / "features"
    write_feature_dir(make_dataset(), path)
    return path


def _run(config_path, out, *args) -> int:
    return app.main(["--config", str(config_path), "--out", str(out), "-q", *args])


class TestExitCodes:
    """Tests for main exit codes."""

    def test_unknown_config_key(self, tmp_path, feature_dir):
        """Test that an invalid configuration exits with 2."""
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {"lerner": "gbdt"}}))
        assert app.main(["--config", str(path), "evaluate", str(feature_dir)]) == 2

    def test_missing_config_file(self, tmp_path, feature_dir):
        """Test that a missing config file exits with 2."""
        assert app.main(["--config", str(tmp_path / "none.json"), "evaluate", str(feature_dir)]) == 2

    def test_empty_manifest_dir(self, tmp_path, config_path):
        """Test that a data error exits with 3."""
        (tmp_path / "raw").mkdir()
        assert _run(config_path, tmp_path / "out", "extract", str(tmp_path / "raw")) == 3

    def test_missing_feature_dir(self, tmp_path, config_path):
        """Test that missing feature tables exit with 3."""
        assert _run(config_path, tmp_path / "out", "evaluate", str(tmp_path / "nothing")) == 3

    def test_leakage(self, tmp_path, config_path, feature_dir, monkeypatch):
        """Test that reading the held-out participant exits with 4."""
        monkeypatch.setattr(evaluation, "_training_participants", lambda participants, held_out: list(participants))
        assert _run(config_path, tmp_path / "out", "evaluate", str(feature_dir)) == 4

    def test_invalid_synthetic_spec(self, tmp_path, config_path):
        """Test that a bad synthgen spec is a configuration error."""
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_participants": 1}))
        assert _run(config_path, tmp_path / "out", "synthgen", "--spec", str(spec)) == 2


class TestCommands:
    """Tests for the subcommand outputs."""

    def test_evaluate(self, tmp_path, config_path, feature_dir):
        """Test the evaluation artifacts and their reproducibility."""
        assert _run(config_path, tmp_path / "a", "evaluate", str(feature_dir), "--excel") == 0
        assert _run(config_path, tmp_path / "b", "evaluate", str(feature_dir)) == 0

        report = json.loads((tmp_path / "a" / "report.json").read_text())
        assert set(report["reports"]) == {"ocular", "cardiac", "fused"}
        assert report["seed"] == 42
        assert report["settings"]["learner"] == "LinearConfig"
        assert (tmp_path / "a" / "report.xlsx").exists()
        assert (tmp_path / "a" / "importance_ocular.csv").exists()
        for name in ("report.json", "confusion.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_override(self, tmp_path, config_path, feature_dir):
        """Test that --seed reaches the report."""
        assert app.main(["--config", str(config_path), "--seed", "5", "--out", str(tmp_path / "s"), "evaluate", str(feature_dir)]) == 0
        assert json.loads((tmp_path / "s" / "report.json").read_text())["seed"] == 5

    def test_stats(self, tmp_path, config_path, feature_dir):
        """Test one statistics table per unimodal modality."""
        assert _run(config_path, tmp_path / "out", "stats", str(feature_dir)) == 0
        ocular = pd.read_csv(tmp_path / "out" / "stats_ocular.csv")
        planted = ocular.set_index("feature").loc["aoi_hand_cards_proportion"]
        assert planted["p"] == ocular["p"].min()
        assert bool(planted["significant"])
        assert (tmp_path / "out" / "stats_cardiac.csv").exists()

    def test_stats_qq(self, tmp_path, config_path, feature_dir):
        """Test one Q-Q table per requested feature."""
        args = ["stats", str(feature_dir), "--modality", "cardiac", "--qq", "hr_mean"]
        assert _run(config_path, tmp_path / "out", *args) == 0
        qq = pd.read_csv(tmp_path / "out" / "qq_cardiac_hr_mean.csv")
        assert list(qq.columns) == ["theoretical", "empirical", "fit"]
        assert len(qq) == 8
        assert qq["empirical"].is_monotonic_increasing
        assert not (tmp_path / "out" / "qq_cardiac_hr_range.csv").exists()

    def test_stats_qq_every_feature(self, tmp_path, config_path, feature_dir):
        """Test that a bare --qq covers every feature of the modality."""
        assert _run(config_path, tmp_path / "out", "stats", str(feature_dir), "--modality", "cardiac", "--qq") == 0
        assert sorted(p.name for p in (tmp_path / "out").glob("qq_*.csv")) == [
            "qq_cardiac_hr_mean.csv", "qq_cardiac_hr_range.csv",
        ]

    def test_stats_qq_unknown_feature(self, tmp_path, config_path, feature_dir):
        """Test that a Q-Q request for a missing column is a data error."""
        args = ["stats", str(feature_dir), "--modality", "cardiac", "--qq", "pupil_avg_mean"]
        assert _run(config_path, tmp_path / "out", *args) == 3

    def test_train(self, tmp_path, config_path, feature_dir):
        """Test that train writes a loadable model per modality."""
        assert _run(config_path, tmp_path / "out", "train", str(feature_dir), "--modality", "cardiac") == 0
        model = load_model(tmp_path / "out" / "model_cardiac.json")
        assert model.kind == ModelKind.LINEAR_MARGIN
        assert model.features == ["hr_mean", "hr_range"]
        assert not (tmp_path / "out" / "model_ocular.json").exists()

    def test_ablate_consensus(self, tmp_path, config_path, feature_dir):
        """Test the consensus ablation table."""
        assert _run(config_path, tmp_path / "out", "ablate", str(feature_dir), "--which", "consensus") == 0
        table = pd.read_csv(tmp_path / "out" / "ablation_consensus.csv")
        assert table["variant"].tolist() == ["with_consensus", "without_consensus", "delta"]

    def test_ablate_ocular_modules(self, tmp_path, config_path, feature_dir):
        """Test the ocular-component ablation table."""
        assert _run(config_path, tmp_path / "out", "ablate", str(feature_dir)) == 0
        table = pd.read_csv(tmp_path / "out" / "ablation_ocular.csv")
        assert table["component"].iloc[0] == "baseline"

    def test_ablate_models(self, tmp_path, config_path, feature_dir, monkeypatch):
        """Test the learner comparison table."""
        fast = {"catboost-like": FAST_GBDT, "xgboost-like": FAST_GBDT, "linear_margin": LinearConfig()}
        monkeypatch.setattr(commands, "default_learner_candidates", lambda C: fast)
        assert _run(config_path, tmp_path / "out", "ablate", str(feature_dir), "--which", "models") == 0
        table = pd.read_csv(tmp_path / "out" / "ablation_models.csv")
        assert table["learner"].tolist() == [name for name in fast for _ in range(2)]
        assert table["modality"].tolist() == ["ocular", "cardiac"] * 3

    def test_trends(self, tmp_path, config_path, feature_dir):
        """Test the trend table and figures."""
        args = ["trends", str(feature_dir), "--modality", "cardiac", "--features", "hr_mean", "--svg"]
        assert _run(config_path, tmp_path / "out", *args) == 0
        trends = pd.read_csv(tmp_path / "out" / "trends_cardiac.csv")
        assert set(trends["feature"]) == {"hr_mean"}
        assert (tmp_path / "out" / "trends_cardiac" / "trend_hr_mean.svg").exists()
        assert (tmp_path / "out" / "trends_cardiac" / "raincloud_hr_mean.svg").exists()
        clouds = pd.read_csv(tmp_path / "out" / "raincloud_cardiac.csv")
        assert len(clouds) == 8 * 2
        assert set(clouds["feature"]) == {"hr_mean"}

    def test_output_root_from_environment(self, tmp_path, config_path, feature_dir, monkeypatch):
        """Test that PHYSIOPRED_OUTPUT_ROOT is used without --out."""
        monkeypatch.setenv("PHYSIOPRED_OUTPUT_ROOT", str(tmp_path / "env"))
        assert app.main(["--config", str(config_path), "-q", "stats", str(feature_dir)]) == 0
        assert (tmp_path / "env" / "stats_ocular.csv").exists()

    def test_synthgen_then_extract(self, tmp_path, config_path):
        """Test generating a cohort and extracting its feature tables."""
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_participants": 4, "win_fraction": 0.5, "desk_scale": 30.0}))
        raw = tmp_path / "raw"
        assert _run(config_path, raw, "synthgen", "--spec", str(spec)) == 0
        assert (raw / "truth.json").exists()
        assert len(list(raw.rglob("manifest.json"))) == 4

        features = tmp_path / "features"
        assert _run(config_path, features, "extract", str(raw)) == 0
        labels = pd.read_csv(features / "labels.csv")
        assert len(labels) == 4
