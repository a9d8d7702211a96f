"""
Verb implementations for the command-line front-end.

Each command takes parsed arguments plus the validated PipelineConfig,
writes its artifacts under the output directory and returns the paths
written.
"""

import json
import logging
import os
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from core import pipeline
from core.config import OUTPUT_ROOT_ENV, PipelineConfig, SynthConfig
from core.errors import ConfigError, DataError
from core.evaluation import (
    LosoSettings,
    ablate_consensus,
    ablation_table,
    compare_learners,
    default_learner_candidates,
    feature_importance_across_folds,
    loso_run,
)
from core.learners import save_model, train_model
from core.models import Dataset, Modality
from core.pipeline import load_dataset
from core.report_export import (
    confusion_table,
    export_excel_report,
    export_raincloud_svgs,
    export_trend_svgs,
    group_trends,
    raincloud_data,
    report_payload,
    write_csv,
    write_json,
)
from core.statistics import participant_means, qq_table, statistical_filter
from core.synthgen import SynthSpec, generate_cohort

logger = logging.getLogger(__name__)

UNIMODAL = [Modality.OCULAR, Modality.CARDIAC]


def output_root(out: Optional[str]) -> Path:
    """--out, else $PHYSIOPRED_OUTPUT_ROOT, else ./out."""
    root = Path(out or os.environ.get(OUTPUT_ROOT_ENV) or "out")
    root.mkdir(parents=True, exist_ok=True)
    return root


def _unimodal(config: PipelineConfig, requested: Optional[str]) -> list[Modality]:
    if requested:
        return [Modality(requested)]
    return [m for m in UNIMODAL if m in config.modalities]


def cmd_synthgen(args, config: PipelineConfig) -> list[Path]:
    synth = config.synth
    if args.spec:
        try:
            synth = SynthConfig.model_validate(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise ConfigError(f"spec file not found: {args.spec}") from None
        except (json.JSONDecodeError, ValidationError) as exc:
            raise ConfigError(f"{args.spec}: invalid synthetic spec ({exc})") from None
    spec = SynthSpec.from_config(synth, config.seed)
    out = output_root(args.out)
    generate_cohort(spec, out, jobs=config.jobs)
    return sorted(out.rglob("manifest.json")) + [out / "truth.json"]


def cmd_extract(args, config: PipelineConfig) -> list[Path]:
    written = pipeline.cmd_extract(args.manifest_dir, output_root(args.out), config)
    return list(written.values())


def cmd_stats(args, config: PipelineConfig) -> list[Path]:
    dataset = load_dataset(args.feature_dir, config)
    out = output_root(args.out)
    paths = []
    for modality in _unimodal(config, args.modality):
        table = statistical_filter(dataset, modality, alpha=args.alpha)
        paths.append(write_csv(table, out / f"stats_{modality.value}.csv"))
        significant = table.loc[table["significant"], "feature"].tolist()
        logger.info("%s: %d of %d features significant", modality.value, len(significant), len(table))
        if args.qq is not None:
            paths += _qq_tables(dataset, modality, args.qq, out)
    return paths


def _qq_tables(dataset: Dataset, modality: Modality, requested: list[str], out: Path) -> list[Path]:
    means = participant_means(dataset, modality)
    features = requested or list(means.columns)
    unknown = [f for f in features if f not in means.columns]
    if unknown:
        raise DataError(f"{modality.value} table lacks features {unknown}")
    paths = []
    for feature in features:
        try:
            table = qq_table(means[feature])
        except ValueError as exc:
            logger.warning("%s/%s: no Q-Q table (%s)", modality.value, feature, exc)
            continue
        paths.append(write_csv(table, out / f"qq_{modality.value}_{feature}.csv"))
    return paths


def cmd_train(args, config: PipelineConfig) -> list[Path]:
    dataset = load_dataset(args.feature_dir, config)
    settings = LosoSettings.from_config(config)
    out = output_root(args.out)
    paths = []
    for modality in _unimodal(config, args.modality):
        features = settings.features[modality]
        table = dataset.select(modality, dataset.participants)
        missing = [f for f in features if f not in table.columns]
        if missing:
            raise DataError(f"{modality.value} table lacks features {missing}")
        y = table["participant"].map(dataset.labels).to_numpy(dtype=int)
        model = train_model(table[features], y, settings.learner_for(modality), seed=settings.seed, features=features)
        path = out / f"model_{modality.value}.json"
        save_model(model, path)
        paths.append(path)
    return paths


def _settings_summary(settings: LosoSettings) -> dict:
    return {
        "learner": type(settings.learner).__name__,
        "learners": {m.value: asdict(settings.learner_for(m)) for m in UNIMODAL},
        "features": {m.value: f for m, f in settings.features.items()},
        "grid": settings.grid,
        "inner_folds": settings.inner_folds,
    }


def cmd_evaluate(args, config: PipelineConfig) -> list[Path]:
    dataset = load_dataset(args.feature_dir, config)
    settings = LosoSettings.from_config(config)
    reports = loso_run(dataset, settings, list(config.modalities))
    named = {m.value: report for m, report in reports.items()}
    out = output_root(args.out)

    paths = [
        write_json(report_payload(named, config.seed, _settings_summary(settings)), out / "report.json"),
        write_csv(confusion_table(named), out / "confusion.csv"),
    ]
    for name, report in sorted(named.items()):
        importance = feature_importance_across_folds(report)
        if not importance.empty:
            paths.append(write_csv(importance, out / f"importance_{name}.csv"))
        logger.info("%s: BAcc %.4f, MCC %.4f", name, report.metrics.bacc, report.metrics.mcc)
    if args.excel:
        path = out / "report.xlsx"
        path.write_bytes(export_excel_report(named, config.seed))
        paths.append(path)
    return paths


def cmd_ablate(args, config: PipelineConfig) -> list[Path]:
    dataset = load_dataset(args.feature_dir, config)
    settings = LosoSettings.from_config(config)
    out = output_root(args.out)
    if args.which == "ocular-modules":
        return [write_csv(ablation_table(dataset, settings), out / "ablation_ocular.csv")]
    if args.which == "models":
        candidates = default_learner_candidates(config.model.C)
        table = compare_learners(dataset, settings, candidates, _unimodal(config, None))
        return [write_csv(table, out / "ablation_models.csv")]
    result = ablate_consensus(dataset, settings)
    return [write_csv(result.to_frame(), out / "ablation_consensus.csv")]


def cmd_trends(args, config: PipelineConfig) -> list[Path]:
    dataset = load_dataset(args.feature_dir, config)
    out = output_root(args.out)
    paths = []
    for modality in _unimodal(config, args.modality):
        table = dataset.tables[modality]
        features = args.features or None
        trends = group_trends(table, dataset.labels, features)
        clouds = raincloud_data(table, dataset.labels, features)
        paths.append(write_csv(trends, out / f"trends_{modality.value}.csv"))
        paths.append(write_csv(clouds, out / f"raincloud_{modality.value}.csv"))
        if args.svg:
            figures = out / f"trends_{modality.value}"
            paths += export_trend_svgs(trends, figures)
            paths += export_raincloud_svgs(clouds, figures)
    return paths


COMMANDS = {
    "synthgen": cmd_synthgen,
    "extract": cmd_extract,
    "stats": cmd_stats,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "trends": cmd_trends,
}
