"""
Learners module.

Wraps the boosted trees and the linear max-margin classifier behind one
TrainedModel type, with class weighting, probability output, grid search,
feature importance and versioned JSON serialization.
"""

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit
from sklearn.linear_model import LogisticRegression
from sklearn.svm import LinearSVC

from core.errors import ConfigError, DataError
from core.gbdt import GbdtConfig, GradientBoostedTrees, config_from_dict, fit_gbdt, preset

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

# Probabilities are kept strictly inside (0, 1)
_P_EPS = 1e-12


class ModelKind(str, Enum):
    GBDT = "Gbdt"
    LINEAR_MARGIN = "LinearMargin"


@dataclass(frozen=True)
class LinearConfig:
    """Linear max-margin settings; class_weighting as in GbdtConfig."""

    C: float = 1.0
    class_weighting: Literal["spw_floor1", "spw", "none"] = "spw"

    def validate(self) -> "LinearConfig":
        if self.C <= 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        return self

    def positive_weight(self, y: np.ndarray) -> float:
        if self.class_weighting == "none":
            return 1.0
        n_pos = int(np.sum(y == 1))
        spw = int(np.sum(y == 0)) / n_pos if n_pos else 1.0
        return max(1.0, spw) if self.class_weighting == "spw_floor1" else spw


LearnerConfig = Union[GbdtConfig, LinearConfig]


@dataclass(frozen=True)
class LinearMargin:
    """Linear decision function with Platt calibration: p = sigmoid(a * (w.x + b) + c)."""

    coef: tuple[float, ...]
    intercept: float
    platt_slope: float
    platt_intercept: float

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.nan_to_num(np.asarray(X, dtype=float), nan=0.0)
        return X @ np.asarray(self.coef) + self.intercept

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.platt_slope * self.decision_function(X) + self.platt_intercept)


@dataclass
class TrainedModel:
    """
    A fitted classifier and the feature registry it was trained on.

    Attributes:
        kind: Learner family
        features: Column names, in training order
        estimator: GradientBoostedTrees or LinearMargin
        config: Hyperparameters used
    """

    kind: ModelKind
    features: list[str]
    estimator: Union[GradientBoostedTrees, LinearMargin]
    config: LearnerConfig
    importance: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.importance:
            self.importance = _raw_importance(self)


def _raw_importance(model: TrainedModel) -> dict[str, float]:
    if model.kind == ModelKind.GBDT:
        values = model.estimator.gain_importance()
    else:
        values = np.abs(np.asarray(model.estimator.coef))
    return {name: float(v) for name, v in zip(model.features, values)}


def _as_matrix(X: Union[pd.DataFrame, np.ndarray], features: Optional[Sequence[str]]) -> tuple[np.ndarray, list[str]]:
    if isinstance(X, pd.DataFrame):
        names = list(features) if features is not None else list(X.columns)
        missing = [f for f in names if f not in X.columns]
        if missing:
            raise DataError(f"feature columns missing from input: {missing}")
        return X[names].to_numpy(dtype=float), names
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {X.shape}")
    names = list(features) if features is not None else [f"f{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
    return X, names


def _check_binary(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=int)
    if set(np.unique(y)) != {0, 1}:
        raise DataError("training labels must contain both classes 0 and 1")
    return y


def class_sample_weights(y: np.ndarray, positive_weight: float) -> np.ndarray:
    return np.where(np.asarray(y) == 1, positive_weight, 1.0)


def train_gbdt(
    X: Union[pd.DataFrame, np.ndarray],
    y: Sequence[int],
    w: Optional[Sequence[float]] = None,
    config: Optional[GbdtConfig] = None,
    seed: int = 0,
    features: Optional[Sequence[str]] = None,
) -> TrainedModel:
    """
    Train boosted trees with class weighting.

    The positive class is weighted per config.class_weighting; optional
    per-sample weights w multiply those class weights.

    Args:
        X: Window feature matrix (NaN = missing)
        y: Labels (1 = win)
        w: Optional per-sample weights
        config: Hyperparameters (default: 'catboost-like' preset)
        seed: Subsampling seed
        features: Column names (taken from X when it is a DataFrame)

    Returns:
        TrainedModel of kind GBDT

    Raises:
        DataError: If X is empty or y has a single class
    """
    config = (config or preset("catboost-like")).validate()
    X, names = _as_matrix(X, features)
    y = _check_binary(y)
    weights = class_sample_weights(y, config.positive_weight(y))
    if w is not None:
        weights = weights * np.asarray(w, dtype=float)
    booster = fit_gbdt(X, y, weights, config, seed)
    return TrainedModel(ModelKind.GBDT, names, booster, config)


def train_linear_margin(
    X: Union[pd.DataFrame, np.ndarray],
    y: Sequence[int],
    C: float = 1.0,
    class_weights: Optional[dict[int, float]] = None,
    seed: int = 0,
    features: Optional[Sequence[str]] = None,
) -> TrainedModel:
    """
    Train a hinge-loss linear classifier with Platt-calibrated output.

    Missing inputs are imputed with 0, the mean of z-scored features.
    Calibration fits a logistic regression on the training decision
    scores, weighted with the same class weights.

    Args:
        X: Window feature matrix
        y: Labels (1 = win)
        C: Inverse regularisation strength
        class_weights: {0: w0, 1: w1}; None = unweighted
        seed: Solver seed
        features: Column names (taken from X when it is a DataFrame)

    Returns:
        TrainedModel of kind LINEAR_MARGIN

    Raises:
        DataError: If y has a single class
    """
    X, names = _as_matrix(X, features)
    y = _check_binary(y)
    X = np.nan_to_num(X, nan=0.0)

    svc = LinearSVC(loss="hinge", dual=True, C=C, class_weight=class_weights,
                    random_state=seed, tol=1e-4, max_iter=20000)
    svc.fit(X, y)
    scores = svc.decision_function(X)

    sample_weight = None
    if class_weights is not None:
        sample_weight = np.array([class_weights.get(int(label), 1.0) for label in y])
    platt = LogisticRegression(C=100.0)
    platt.fit(scores.reshape(-1, 1), y, sample_weight=sample_weight)

    estimator = LinearMargin(
        coef=tuple(float(c) for c in svc.coef_.ravel()),
        intercept=float(svc.intercept_[0]),
        platt_slope=float(platt.coef_[0, 0]),
        platt_intercept=float(platt.intercept_[0]),
    )
    config = LinearConfig(C=C, class_weighting="none" if class_weights is None else "spw")
    return TrainedModel(ModelKind.LINEAR_MARGIN, names, estimator, config)


def train_model(
    X: Union[pd.DataFrame, np.ndarray],
    y: Sequence[int],
    config: LearnerConfig,
    seed: int = 0,
    features: Optional[Sequence[str]] = None,
) -> TrainedModel:
    """Dispatch on the config type to the matching learner."""
    if isinstance(config, GbdtConfig):
        return train_gbdt(X, y, config=config, seed=seed, features=features)
    config.validate()
    y_arr = np.asarray(y, dtype=int)
    class_weights = None
    if config.class_weighting != "none":
        class_weights = {0: 1.0, 1: config.positive_weight(y_arr)}
    model = train_linear_margin(X, y_arr, C=config.C, class_weights=class_weights, seed=seed, features=features)
    model.config = config
    return model


def predict_proba(model: TrainedModel, X: Union[pd.DataFrame, np.ndarray]) -> np.ndarray:
    """
    Window-level win probabilities.

    Args:
        model: Trained model
        X: DataFrame holding the model's feature columns, or a matrix whose
            columns are in the model's feature order

    Returns:
        Probabilities strictly inside (0, 1)

    Raises:
        DataError: If the input columns do not match the model's registry
    """
    if isinstance(X, pd.DataFrame):
        matrix, _ = _as_matrix(X, model.features)
    else:
        matrix = np.asarray(X, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != len(model.features):
            raise DataError(
                f"model expects {len(model.features)} features {model.features}, got shape {matrix.shape}"
            )
    p = model.estimator.predict_proba(matrix)
    return np.clip(p, _P_EPS, 1.0 - _P_EPS)


def feature_importance(model: TrainedModel) -> dict[str, float]:
    """
    Importance normalised to sum to 100, highest first.

    Boosted trees report total split gain per feature; the linear model
    reports |weight|. A model without any split reports all zeros.
    """
    if model is None:
        raise ValueError("feature_importance needs a trained model")
    raw = _raw_importance(model)
    total = sum(raw.values())
    if total <= 0:
        shares = {name: 0.0 for name in raw}
    else:
        shares = {name: 100.0 * value / total for name, value in raw.items()}
    return dict(sorted(shares.items(), key=lambda kv: (-kv[1], kv[0])))


def _tie_break_key(config: LearnerConfig, score: float) -> tuple:
    return (
        -score,
        getattr(config, "n_trees", 0),
        getattr(config, "max_depth", 0),
        getattr(config, "learning_rate", 0.0),
        getattr(config, "C", 0.0),
    )


def expand_grid(base: LearnerConfig, grid: dict[str, Sequence]) -> list[LearnerConfig]:
    """
    All configurations of a lattice, varying the named fields of base.

    Raises:
        ConfigError: If the grid is empty or names an unknown field
    """
    if not grid or any(len(values) == 0 for values in grid.values()):
        raise ConfigError("grid search needs a non-empty grid")
    known = {f.name for f in fields(base)}
    unknown = sorted(set(grid) - known)
    if unknown:
        raise ConfigError(f"unknown grid parameters {unknown}")
    keys = sorted(grid)
    configs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        configs.append(replace(base, **dict(zip(keys, combo))).validate())
    return configs


def grid_search(
    configs: Sequence[LearnerConfig],
    score_fn: Callable[[LearnerConfig], float],
) -> tuple[LearnerConfig, float]:
    """
    Exhaustive search for the best-scoring configuration.

    Ties go to fewer trees, then shallower depth, then lower learning rate.

    Args:
        configs: Candidate configurations (see expand_grid)
        score_fn: Inner-CV objective, higher is better (balanced accuracy)

    Returns:
        (best config, its score)

    Raises:
        ConfigError: If no configuration is given
    """
    if not configs:
        raise ConfigError("grid search needs a non-empty grid")
    scored = [(config, float(score_fn(config))) for config in configs]
    for config, score in scored:
        logger.debug("grid point %s -> %.4f", config, score)
    return min(scored, key=lambda item: _tie_break_key(*item))


def model_to_dict(model: TrainedModel) -> dict:
    if model.kind == ModelKind.GBDT:
        payload = model.estimator.to_dict()
    else:
        payload = asdict(model.estimator)
        payload["coef"] = list(payload["coef"])
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind.value,
        "features": list(model.features),
        "config": asdict(model.config),
        "estimator": payload,
        "importance": model.importance,
    }


def model_from_dict(data: dict) -> TrainedModel:
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ConfigError(f"unsupported model format version {version!r}")
    kind = ModelKind(data["kind"])
    if kind == ModelKind.GBDT:
        estimator = GradientBoostedTrees.from_dict(data["estimator"])
        config: LearnerConfig = config_from_dict(data["config"])
    else:
        payload = dict(data["estimator"])
        payload["coef"] = tuple(payload["coef"])
        estimator = LinearMargin(**payload)
        config = LinearConfig(**data["config"])
    return TrainedModel(kind, list(data["features"]), estimator, config, dict(data["importance"]))


def save_model(model: TrainedModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path]) -> TrainedModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid model file ({exc})") from None
    return model_from_dict(data)
