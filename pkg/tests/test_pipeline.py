"""
Tests for pipeline module.
"""

import numpy as np
import pandas as pd
import pytest

from core.config import PipelineConfig
from core.errors import DataError
from core.models import CARDIAC_FEATURES, META_COLUMNS, Modality, ocular_feature_names
from core.pipeline import cmd_extract, extract_tables, load_dataset
from core.synthgen import SynthSpec, generate_cohort

RAW = PipelineConfig(normalize={"within_subject": False})


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohort")
    generate_cohort(SynthSpec(seed=11, n_participants=4, win_fraction=0.5, desk_scale=30.0), root)
    return root


@pytest.fixture(scope="module")
def feature_dir(cohort_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("features")
    cmd_extract(cohort_dir, out, PipelineConfig())
    return out


class TestExtract:
    """Tests for extract_tables and cmd_extract functions."""

    def test_written_tables(self, feature_dir):
        """Test the three tables and their columns."""
        ocular = pd.read_csv(feature_dir / "ocular.csv")
        cardiac = pd.read_csv(feature_dir / "cardiac.csv")
        labels = pd.read_csv(feature_dir / "labels.csv")

        assert list(ocular.columns) == META_COLUMNS + ocular_feature_names()
        assert list(cardiac.columns) == META_COLUMNS + CARDIAC_FEATURES
        assert labels["participant"].tolist() == ["P001", "P002", "P003", "P004"]
        assert sorted(labels["label"]) == ["loss", "loss", "win", "win"]

    def test_cardiac_windows_per_phase(self, feature_dir):
        """Test whole 15 s windows per phase; the 6 s tutorial is skipped."""
        cardiac = pd.read_csv(feature_dir / "cardiac.csv")
        counts = cardiac.groupby(["participant", "phase"]).size()
        for pid in ("P001", "P002", "P003", "P004"):
            assert counts[(pid, "LowComplexity")] == 3
            assert counts[(pid, "HighComplexity")] == 1
        assert "Tutorial" not in set(cardiac["phase"])

    def test_ocular_windows_every_phase(self, feature_dir):
        """Test that ocular windows cover every phase."""
        ocular = pd.read_csv(feature_dir / "ocular.csv")
        assert set(ocular["phase"]) == {"Tutorial", "LowComplexity", "HighComplexity"}
        low = ocular[(ocular["participant"] == "P001") & (ocular["phase"] == "LowComplexity")]
        np.testing.assert_allclose(np.diff(low["t_start"]), 0.25)
        assert low["aoi_hand_cards_proportion"].between(0.0, 1.0).all()

    def test_physiological_values(self, feature_dir):
        """Test that recovered heart rates are plausible."""
        dataset = load_dataset(feature_dir, RAW)
        hr = dataset.tables[Modality.CARDIAC]["hr_mean"]
        assert hr.between(40.0, 150.0).all()

    def test_rerun_identical(self, cohort_dir, feature_dir, tmp_path):
        """Test that extraction is byte-for-byte reproducible."""
        cmd_extract(cohort_dir, tmp_path, PipelineConfig())
        for name in ("ocular.csv", "cardiac.csv", "labels.csv"):
            assert (tmp_path / name).read_bytes() == (feature_dir / name).read_bytes()

    def test_empty_directory(self, tmp_path):
        """Test that a directory without manifests is rejected."""
        with pytest.raises(DataError, match="no manifest.json"):
            extract_tables(tmp_path, PipelineConfig())

    def test_broken_manifest(self, tmp_path):
        """Test that a bad manifest names its participant folder."""
        (tmp_path / "P009").mkdir()
        (tmp_path / "P009" / "manifest.json").write_text("{")
        with pytest.raises(DataError, match="P009"):
            extract_tables(tmp_path, PipelineConfig())


class TestLoadDataset:
    """Tests for load_dataset function."""

    def test_within_subject_normalisation(self, feature_dir):
        """Test that features are z-scored per participant by default."""
        dataset = load_dataset(feature_dir)
        table = dataset.tables[Modality.CARDIAC]
        means = table.groupby("participant")["hr_mean"].mean()
        np.testing.assert_allclose(means.to_numpy(), 0.0, atol=1e-9)
        assert dataset.labels == load_dataset(feature_dir, RAW).labels

    def test_raw(self, feature_dir):
        """Test loading without normalisation."""
        table = load_dataset(feature_dir, RAW).tables[Modality.CARDIAC]
        pd.testing.assert_frame_equal(table, pd.read_csv(feature_dir / "cardiac.csv", dtype={"participant": str}))

    def test_selected_modality(self, feature_dir):
        """Test loading one table only."""
        dataset = load_dataset(feature_dir, modalities=[Modality.CARDIAC])
        assert dataset.modalities == [Modality.CARDIAC]

    def test_missing_table(self, tmp_path):
        """Test that a missing labels table is a data error."""
        with pytest.raises(DataError, match="feature table not found"):
            load_dataset(tmp_path)
