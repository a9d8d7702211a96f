"""
Evaluation module.

Leave-one-subject-out protocol with inner participant-wise cross-validation
for threshold (and optional hyperparameter) selection, confusion-matrix
metrics, the ocular-component and consensus ablations and the learner
comparison.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.model_selection import StratifiedKFold

from core.config import PipelineConfig
from core.errors import ConfigError, DataError
from core.fusion import (
    SubjectScore,
    balanced_accuracy,
    calibrate_threshold,
    consensus_fuse,
    pool_by_participant,
    train_fusion_meta,
)
from core.gbdt import GbdtConfig, preset
from core.learners import (
    LearnerConfig,
    LinearConfig,
    TrainedModel,
    expand_grid,
    feature_importance,
    grid_search,
    predict_proba,
    train_model,
)
from core.models import AccessGuard, Dataset, Modality, OcularComponent, component_features

logger = logging.getLogger(__name__)

UNIMODAL = (Modality.OCULAR, Modality.CARDIAC)
MIN_PARTICIPANTS = 4
METRIC_NAMES = ("bacc", "macro_pr", "macro_re", "macro_f1", "mcc")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Subject-level counts; class 1 = Win."""

    tn: int = 0
    fp: int = 0
    fn: int = 0
    tp: int = 0

    def __post_init__(self):
        if min(self.tn, self.fp, self.fn, self.tp) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @classmethod
    def from_scores(cls, scores: Iterable[SubjectScore]) -> "ConfusionMatrix":
        counts = {"tn": 0, "fp": 0, "fn": 0, "tp": 0}
        for s in scores:
            key = {(0, 0): "tn", (0, 1): "fp", (1, 0): "fn", (1, 1): "tp"}[(s.y_true, s.y_hat)]
            counts[key] += 1
        return cls(**counts)


@dataclass(frozen=True)
class Metrics:
    bacc: float
    macro_pr: float
    macro_re: float
    macro_f1: float
    mcc: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(confusion: ConfusionMatrix) -> Metrics:
    """
    Balanced accuracy, macro precision/recall/F1 and MCC from a confusion matrix.

    Zero-denominator ratios count as 0; MCC is 0 when any marginal is 0.

    Args:
        confusion: Subject-level confusion matrix

    Returns:
        Metrics

    Raises:
        ValueError: If the matrix is empty

    Examples:
        >>> m = compute_metrics(ConfusionMatrix(tn=14, fp=2, fn=3, tp=16))
        >>> round(m.bacc, 4), round(m.mcc, 4)
        (0.8586, 0.7147)
    """
    c = confusion
    if c.total <= 0:
        raise ValueError("compute_metrics needs at least one subject")

    recall = (_ratio(c.tn, c.tn + c.fp), _ratio(c.tp, c.tp + c.fn))
    precision = (_ratio(c.tn, c.tn + c.fn), _ratio(c.tp, c.tp + c.fp))
    f1 = tuple(_ratio(2.0 * p * r, p + r) for p, r in zip(precision, recall))

    factors = (c.tp + c.fp, c.tp + c.fn, c.tn + c.fp, c.tn + c.fn)
    if 0 in factors:
        mcc = 0.0
    else:
        mcc = (c.tp * c.tn - c.fp * c.fn) / float(np.sqrt(float(np.prod(factors, dtype=float))))

    return Metrics(
        bacc=(recall[0] + recall[1]) / 2.0,
        macro_pr=(precision[0] + precision[1]) / 2.0,
        macro_re=(recall[0] + recall[1]) / 2.0,
        macro_f1=(f1[0] + f1[1]) / 2.0,
        mcc=mcc,
    )


@dataclass(frozen=True)
class FoldRecord:
    """
    What one LOSO fold chose and touched for one modality.

    Attributes:
        held_out: Test participant
        tau: Threshold applied to the held-out score
        config: Hyperparameters of the model that scored the held-out subject
        accessed: Participants read while training and tuning
        inner_bacc: Inner-CV balanced accuracy of the selected configuration
        importance: Normalised feature importance of the fold model
    """

    held_out: str
    tau: float
    config: dict
    accessed: list[str]
    inner_bacc: Optional[float] = None
    importance: dict[str, float] = field(default_factory=dict)


@dataclass
class EvalReport:
    modality: Modality
    scores: list[SubjectScore]
    folds: list[FoldRecord]
    use_consensus: bool = True
    confusion: ConfusionMatrix = field(init=False)
    metrics: Metrics = field(init=False)

    def __post_init__(self):
        self.scores = sorted(self.scores, key=lambda s: s.participant_id)
        self.folds = sorted(self.folds, key=lambda f: f.held_out)
        self.confusion = ConfusionMatrix.from_scores(self.scores)
        self.metrics = compute_metrics(self.confusion)

    @property
    def bacc(self) -> float:
        return self.metrics.bacc

    @property
    def thresholds(self) -> dict[str, float]:
        return {f.held_out: f.tau for f in self.folds}

    def subject_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "participant": s.participant_id,
                    "modality": s.modality.value,
                    "p": s.p,
                    "tau": s.tau,
                    "y_hat": s.y_hat,
                    "y_true": s.y_true,
                }
                for s in self.scores
            ],
            columns=["participant", "modality", "p", "tau", "y_hat", "y_true"],
        )

    def to_dict(self) -> dict:
        return {
            "modality": self.modality.value,
            "use_consensus": self.use_consensus,
            "metrics": self.metrics.as_dict(),
            "confusion": asdict(self.confusion),
            "subjects": self.subject_frame().to_dict(orient="records"),
            "folds": [
                {
                    "held_out": f.held_out,
                    "tau": f.tau,
                    "config": f.config,
                    "accessed": f.accessed,
                    "inner_bacc": f.inner_bacc,
                }
                for f in self.folds
            ],
        }


@dataclass(frozen=True)
class LosoSettings:
    """
    Everything a LOSO run needs besides the data.

    Attributes:
        learner: Base learner configuration
        features: Final feature set per unimodal modality
        fusion: Meta-classifier configuration
        grid: Optional hyperparameter lattice over each modality's learner
        inner_folds: Inner participant-wise folds
        seed: Seed for inner splits and model training
        jobs: Parallel folds
        modality_learners: Per-modality replacements for `learner`
    """

    learner: LearnerConfig
    features: dict[Modality, list[str]]
    fusion: GbdtConfig = field(default_factory=lambda: preset("fusion-meta"))
    grid: Optional[dict[str, list]] = None
    inner_folds: int = 4
    seed: int = 0
    jobs: int = 1
    modality_learners: dict[Modality, LearnerConfig] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "LosoSettings":
        model = config.model
        overrides: dict[Modality, LearnerConfig] = {}
        if model.learner == "gbdt":
            learner: LearnerConfig = preset(model.preset)
            for modality, name in ((Modality.OCULAR, model.ocular_preset), (Modality.CARDIAC, model.cardiac_preset)):
                if name is not None:
                    overrides[modality] = preset(name)
        else:
            learner = LinearConfig(C=model.C).validate()
        return cls(
            learner=learner,
            features={
                Modality.OCULAR: list(config.features.ocular),
                Modality.CARDIAC: list(config.features.cardiac),
            },
            fusion=preset(model.fusion_preset),
            grid=dict(model.grid) if model.grid else None,
            inner_folds=model.inner_folds,
            seed=config.seed,
            jobs=config.jobs,
            modality_learners=overrides,
        )

    def learner_for(self, modality: Modality) -> LearnerConfig:
        return self.modality_learners.get(Modality(modality), self.learner)

    def with_features(self, modality: Modality, features: Sequence[str]) -> "LosoSettings":
        updated = dict(self.features)
        updated[Modality(modality)] = list(features)
        return replace(self, features=updated)

    def with_learner(self, learner: LearnerConfig) -> "LosoSettings":
        """Same settings with one learner for every modality."""
        return replace(self, learner=learner, modality_learners={})


def _training_participants(participants: Sequence[str], held_out: str) -> list[str]:
    return [pid for pid in participants if pid != held_out]


def _window_labels(table: pd.DataFrame, labels: dict[str, int]) -> np.ndarray:
    return table["participant"].map(labels).to_numpy(dtype=int)


def _fit(dataset: Dataset, modality: Modality, features: list[str], ids, config: LearnerConfig, seed: int) -> TrainedModel:
    table = dataset.select(modality, ids)
    return train_model(table[features], _window_labels(table, dataset.labels), config, seed=seed, features=features)


def _subject_probabilities(model: TrainedModel, dataset: Dataset, modality: Modality, ids) -> dict[str, float]:
    table = dataset.select(modality, ids)
    return pool_by_participant(table["participant"].tolist(), predict_proba(model, table))


def _inner_oof(
    dataset: Dataset,
    modality: Modality,
    train_ids: list[str],
    config: LearnerConfig,
    settings: LosoSettings,
) -> dict[str, float]:
    """Out-of-fold pooled subject probabilities from participant-wise inner CV."""
    features = settings.features[modality]
    ids = np.array(sorted(train_ids))
    y = dataset.label_vector(ids)
    k = min(settings.inner_folds, int(np.bincount(y, minlength=2).min()))
    if k < 2:
        logger.warning("inner CV impossible with %d minority participants", int(np.bincount(y, minlength=2).min()))
        return {}

    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=settings.seed)
    oof: dict[str, float] = {}
    for fit_idx, val_idx in splitter.split(ids, y):
        model = _fit(dataset, modality, features, ids[fit_idx], config, settings.seed)
        oof.update(_subject_probabilities(model, dataset, modality, ids[val_idx]))
    return dict(sorted(oof.items()))


def _oof_threshold(oof: dict[str, float], labels: dict[str, int]) -> tuple[float, Optional[float]]:
    if not oof:
        return 0.5, None
    p = np.array(list(oof.values()))
    y = np.array([labels[pid] for pid in oof])
    tau = calibrate_threshold(p, y)
    return tau, balanced_accuracy(y, (p >= tau).astype(int))


@dataclass
class _UnimodalFit:
    model: TrainedModel
    config: LearnerConfig
    tau: float
    inner_bacc: Optional[float]
    oof: dict[str, float]


def _fit_unimodal(dataset: Dataset, modality: Modality, train_ids: list[str], settings: LosoSettings) -> _UnimodalFit:
    if settings.grid:
        cache: dict[LearnerConfig, dict[str, float]] = {}

        def score(config: LearnerConfig) -> float:
            cache[config] = _inner_oof(dataset, modality, train_ids, config, settings)
            inner = _oof_threshold(cache[config], dataset.labels)[1]
            return -np.inf if inner is None else inner

        config, _ = grid_search(expand_grid(settings.learner_for(modality), settings.grid), score)
        oof = cache[config]
    else:
        config = settings.learner_for(modality)
        oof = _inner_oof(dataset, modality, train_ids, config, settings)

    tau, inner_bacc = _oof_threshold(oof, dataset.labels)
    model = _fit(dataset, modality, settings.features[modality], train_ids, config, settings.seed)
    return _UnimodalFit(model, config, tau, inner_bacc, oof)


def _meta_pairs(fits: dict[Modality, _UnimodalFit], labels: dict[str, int]) -> pd.DataFrame:
    ocular, cardiac = fits[Modality.OCULAR], fits[Modality.CARDIAC]
    rows = []
    for pid in sorted(set(ocular.oof) & set(cardiac.oof)):
        rows.append({
            "participant": pid,
            "p_ocular": ocular.oof[pid],
            "p_cardiac": cardiac.oof[pid],
            "y_hat_ocular": int(ocular.oof[pid] >= ocular.tau),
            "y_hat_cardiac": int(cardiac.oof[pid] >= cardiac.tau),
            "y_true": labels[pid],
        })
    return pd.DataFrame(
        rows, columns=["participant", "p_ocular", "p_cardiac", "y_hat_ocular", "y_hat_cardiac", "y_true"]
    )


def _config_dict(config: LearnerConfig) -> dict:
    data = asdict(config)
    data["learner"] = "gbdt" if isinstance(config, GbdtConfig) else "linear_margin"
    return data


# Result key: (modality, use_consensus); unimodal results always use True
_Key = tuple[Modality, bool]


def _run_fold(
    dataset: Dataset,
    held_out: str,
    settings: LosoSettings,
    modalities: list[Modality],
    consensus_variants: tuple[bool, ...],
) -> dict[_Key, tuple[SubjectScore, FoldRecord]]:
    guard = AccessGuard()
    guarded = dataset.with_guard(guard)
    train_ids = _training_participants(dataset.participants, held_out)
    fused = Modality.FUSED in modalities
    unimodal = [m for m in UNIMODAL if m in modalities or fused]

    fits: dict[Modality, _UnimodalFit] = {}
    metas: dict[bool, tuple[Optional[TrainedModel], float]] = {}
    with guard.training_scope(held_out):
        for modality in unimodal:
            fits[modality] = _fit_unimodal(guarded, modality, train_ids, settings)
        if fused:
            pairs = _meta_pairs(fits, dataset.labels)
            for variant in consensus_variants:
                metas[variant] = train_fusion_meta(pairs, settings.fusion, settings.seed, variant)
    accessed = sorted(guard.accessed[held_out])

    y_true = dataset.labels[held_out]
    results: dict[_Key, tuple[SubjectScore, FoldRecord]] = {}
    scores: dict[Modality, SubjectScore] = {}
    for modality in unimodal:
        fit = fits[modality]
        p = _subject_probabilities(fit.model, dataset, modality, [held_out])[held_out]
        scores[modality] = SubjectScore.decide(held_out, modality, p, fit.tau, y_true)
        record = FoldRecord(
            held_out=held_out,
            tau=fit.tau,
            config=_config_dict(fit.config),
            accessed=accessed,
            inner_bacc=fit.inner_bacc,
            importance=feature_importance(fit.model),
        )
        results[(modality, True)] = (scores[modality], record)

    for variant, (meta, tau_fusion) in metas.items():
        score = consensus_fuse(scores[Modality.OCULAR], scores[Modality.CARDIAC], meta, tau_fusion, variant)
        record = FoldRecord(
            held_out=held_out,
            tau=tau_fusion,
            config=_config_dict(settings.fusion) | {"meta_trained": meta is not None},
            accessed=accessed,
            importance=feature_importance(meta) if meta is not None else {},
        )
        results[(Modality.FUSED, variant)] = (score, record)

    logger.info(
        "fold %s: %s",
        held_out,
        ", ".join(f"{m.value}{'' if c else '/no-consensus'} p={s.p:.3f}" for (m, c), (s, _) in results.items()),
    )
    return results


def _check_dataset(dataset: Dataset, settings: LosoSettings, modalities: list[Modality]) -> None:
    participants = dataset.participants
    if len(participants) < MIN_PARTICIPANTS:
        raise DataError(f"LOSO needs at least {MIN_PARTICIPANTS} participants, got {len(participants)}")
    if set(dataset.labels.values()) != {0, 1}:
        raise DataError("LOSO needs both win and loss participants")

    needed = [m for m in UNIMODAL if m in modalities or Modality.FUSED in modalities]
    for modality in needed:
        if modality not in dataset.tables:
            raise DataError(f"no {modality.value} feature table loaded")
        features = settings.features.get(modality) or []
        if not features:
            raise ConfigError(f"empty {modality.value} feature set")
        table = dataset.tables[modality]
        missing = [f for f in features if f not in table.columns]
        if missing:
            raise DataError(f"{modality.value} table lacks features {missing}")
        present = set(dataset.select(modality, participants)["participant"])
        empty = [pid for pid in participants if pid not in present]
        if empty:
            raise DataError(f"{modality.value}: participants with zero LowComplexity windows: {empty}")


def _run_loso(
    dataset: Dataset,
    settings: LosoSettings,
    modalities: Sequence[Modality],
    consensus_variants: tuple[bool, ...] = (True,),
) -> dict[_Key, EvalReport]:
    modalities = [Modality(m) for m in modalities]
    _check_dataset(dataset, settings, modalities)
    dataset = dataset.with_guard(None)

    folds = Parallel(n_jobs=settings.jobs)(
        delayed(_run_fold)(dataset, pid, settings, modalities, consensus_variants)
        for pid in dataset.participants
    )

    collected: dict[_Key, tuple[list[SubjectScore], list[FoldRecord]]] = {}
    for fold in folds:
        for key, (score, record) in fold.items():
            scores, records = collected.setdefault(key, ([], []))
            scores.append(score)
            records.append(record)

    wanted = set(modalities)
    return {
        key: EvalReport(modality=key[0], scores=scores, folds=records, use_consensus=key[1])
        for key, (scores, records) in collected.items()
        if key[0] in wanted
    }


def loso_run(
    dataset: Dataset,
    settings: LosoSettings,
    modalities: Optional[Sequence[Modality]] = None,
    use_consensus: bool = True,
) -> dict[Modality, EvalReport]:
    """
    Leave-one-subject-out evaluation.

    For each participant: train on every other participant's LowComplexity
    windows (labelled with the subject outcome, positive class weighted by
    the fold's #loss/#win), pick the threshold (and the configuration when a
    grid is set) from inner participant-wise CV out-of-fold pooled scores,
    retrain on the whole training fold, then pool the held-out windows with
    logit_mean_pool and apply the threshold. The fused modality stacks the
    two unimodal scores (see consensus_fuse).

    Training and tuning run inside an AccessGuard scope; the participants
    each fold read are kept in the report.

    Args:
        dataset: Labels and window tables
        settings: Learner, features, fusion and CV settings
        modalities: Modalities to report (default: all available + fused)
        use_consensus: Consensus gate for the fused modality

    Returns:
        EvalReport per requested modality

    Raises:
        DataError: Fewer than 4 participants, a single class, or a
            participant without LowComplexity windows
        LeakageError: If held-out data is read during training
    """
    if modalities is None:
        modalities = [m for m in UNIMODAL if m in dataset.tables]
        if len(modalities) == 2:
            modalities.append(Modality.FUSED)
    reports = _run_loso(dataset, settings, modalities, (use_consensus,))
    return {key[0]: report for key, report in reports.items()}


def feature_importance_across_folds(report: EvalReport) -> pd.DataFrame:
    """
    Mean normalised feature importance over the LOSO folds.

    Returns:
        DataFrame [feature, mean_importance, std_importance, n_folds], most
        important first
    """
    frames = [pd.Series(f.importance, dtype=float) for f in report.folds if f.importance]
    columns = ["feature", "mean_importance", "std_importance", "n_folds"]
    if not frames:
        return pd.DataFrame(columns=columns)
    table = pd.concat(frames, axis=1).fillna(0.0)
    out = pd.DataFrame({
        "feature": table.index,
        "mean_importance": table.mean(axis=1).to_numpy(),
        "std_importance": table.std(axis=1, ddof=0).to_numpy(),
        "n_folds": table.shape[1],
    })
    return out.sort_values(["mean_importance", "feature"], ascending=[False, True], kind="mergesort").reset_index(
        drop=True
    )[columns]


@dataclass(frozen=True)
class AblationResult:
    component: str
    removed: list[str]
    report: EvalReport
    delta_bacc: float


def ablate_ocular(
    dataset: Dataset,
    settings: LosoSettings,
    component: OcularComponent,
    baseline: Optional[EvalReport] = None,
) -> AblationResult:
    """
    Rerun ocular LOSO without one feature component.

    Learner settings, grid and threshold selection stay as in `settings`.
    A component absent from the final feature set leaves the run unchanged
    (delta 0).

    Args:
        dataset: Labels and window tables
        settings: LOSO settings of the full model
        component: Pupil, Fixation, Saccade or AoiGaze
        baseline: Full-model ocular report (computed when omitted)

    Returns:
        AblationResult with delta_bacc = ablated - baseline

    Raises:
        ConfigError: If removing the component empties the feature set
    """
    component = OcularComponent(component)
    if baseline is None:
        baseline = loso_run(dataset, settings, [Modality.OCULAR])[Modality.OCULAR]

    features = settings.features[Modality.OCULAR]
    removed = component_features(component, features)
    kept = [f for f in features if f not in removed]
    if not kept:
        raise ConfigError(f"removing {component.value} leaves no ocular features")
    if not removed:
        logger.info("%s not in the final ocular set; ablation equals baseline", component.value)
        return AblationResult(component.value, [], baseline, 0.0)

    report = loso_run(dataset, settings.with_features(Modality.OCULAR, kept), [Modality.OCULAR])[Modality.OCULAR]
    return AblationResult(component.value, removed, report, report.bacc - baseline.bacc)


def ablation_table(
    dataset: Dataset,
    settings: LosoSettings,
    components: Optional[Sequence[OcularComponent]] = None,
) -> pd.DataFrame:
    """One row for the full ocular model plus one per removed component."""
    components = list(components) if components is not None else list(OcularComponent)
    baseline = loso_run(dataset, settings, [Modality.OCULAR])[Modality.OCULAR]
    rows = [{"component": "baseline", "n_removed": 0, **baseline.metrics.as_dict(), "delta_bacc": 0.0}]
    for component in components:
        result = ablate_ocular(dataset, settings, component, baseline)
        rows.append({
            "component": result.component,
            "n_removed": len(result.removed),
            **result.report.metrics.as_dict(),
            "delta_bacc": result.delta_bacc,
        })
    return pd.DataFrame(rows, columns=["component", "n_removed", *METRIC_NAMES, "delta_bacc"])


@dataclass(frozen=True)
class ConsensusAblation:
    with_consensus: EvalReport
    without_consensus: EvalReport

    @property
    def delta(self) -> dict[str, float]:
        a = self.with_consensus.metrics.as_dict()
        b = self.without_consensus.metrics.as_dict()
        return {name: a[name] - b[name] for name in METRIC_NAMES}

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"variant": "with_consensus", **self.with_consensus.metrics.as_dict()},
            {"variant": "without_consensus", **self.without_consensus.metrics.as_dict()},
            {"variant": "delta", **self.delta},
        ]
        return pd.DataFrame(rows, columns=["variant", *METRIC_NAMES])


def ablate_consensus(dataset: Dataset, settings: LosoSettings) -> ConsensusAblation:
    """
    Fused LOSO with and without the consensus gate.

    Both variants share the unimodal models and thresholds of each fold;
    only the routing of agreement subjects (and the meta-model's training
    rows) differ.
    """
    reports = _run_loso(dataset, settings, [Modality.OCULAR, Modality.CARDIAC, Modality.FUSED], (True, False))
    return ConsensusAblation(
        with_consensus=reports[(Modality.FUSED, True)],
        without_consensus=reports[(Modality.FUSED, False)],
    )


def default_learner_candidates(C: float = 1.0) -> dict[str, LearnerConfig]:
    return {
        "catboost-like": preset("catboost-like"),
        "xgboost-like": preset("xgboost-like"),
        "linear_margin": LinearConfig(C=C).validate(),
    }


def compare_learners(
    dataset: Dataset,
    settings: LosoSettings,
    candidates: Optional[dict[str, LearnerConfig]] = None,
    modalities: Optional[Sequence[Modality]] = None,
) -> pd.DataFrame:
    """
    Unimodal LOSO once per candidate learner.

    Features, inner folds, grid and seed come from `settings`; only the
    learner changes between runs.

    Args:
        dataset: Labels and window tables
        settings: Base LOSO settings
        candidates: Learner configurations by display name (default:
            catboost-like, xgboost-like and linear_margin)
        modalities: Unimodal modalities to compare (default: those loaded)

    Returns:
        DataFrame [learner, modality, bacc, macro_pr, macro_re, macro_f1, mcc]
    """
    candidates = default_learner_candidates() if candidates is None else candidates
    if not candidates:
        raise ConfigError("no learners to compare")
    if modalities is None:
        modalities = [m for m in UNIMODAL if m in dataset.tables]
    modalities = [Modality(m) for m in modalities]
    if Modality.FUSED in modalities:
        raise ConfigError("learner comparison covers unimodal modalities only")

    rows = []
    for name, learner in candidates.items():
        reports = loso_run(dataset, settings.with_learner(learner), modalities)
        for modality in modalities:
            metrics = reports[modality].metrics.as_dict()
            logger.info("%s / %s: BAcc %.4f", name, modality.value, metrics["bacc"])
            rows.append({"learner": name, "modality": modality.value, **metrics})
    return pd.DataFrame(rows, columns=["learner", "modality", *METRIC_NAMES])
