"""
Gradient-boosted decision trees for binary classification.

Logistic loss, second-order split gain with L2 leaf regularisation,
min-child-weight and min-gain pruning, histogram split search over
per-fit quantile bins, and a learned default direction for missing values.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.special import expit, logit

from core.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

ClassWeighting = Literal["spw_floor1", "spw", "none"]


@dataclass(frozen=True)
class GbdtConfig:
    """
    Boosting hyperparameters.

    class_weighting sets the positive-class weight from
    spw = #negative / #positive training samples: 'spw_floor1' uses
    max(1, spw), 'spw' uses spw, 'none' uses 1. class_weight_pos, when set,
    overrides it. max_bins caps the quantile bins per feature; columns with
    fewer distinct values are split exactly.
    """

    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    l2_leaf_reg: float = 1.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    colsample: float = 1.0
    gamma: float = 0.0
    class_weight_pos: Optional[float] = None
    class_weighting: ClassWeighting = "spw_floor1"
    max_bins: int = 256

    def validate(self) -> "GbdtConfig":
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        for name in ("subsample", "colsample"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must be in (0, 1], got {value}")
        for name in ("l2_leaf_reg", "min_child_weight", "gamma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.class_weight_pos is not None and self.class_weight_pos <= 0:
            raise ConfigError("class_weight_pos must be positive")
        if self.class_weighting not in ("spw_floor1", "spw", "none"):
            raise ConfigError(f"unknown class_weighting '{self.class_weighting}'")
        if not 2 <= self.max_bins <= 65535:
            raise ConfigError(f"max_bins must be in [2, 65535], got {self.max_bins}")
        return self

    def positive_weight(self, y: np.ndarray) -> float:
        if self.class_weight_pos is not None:
            return self.class_weight_pos
        if self.class_weighting == "none":
            return 1.0
        n_pos = int(np.sum(y == 1))
        n_neg = int(np.sum(y == 0))
        spw = n_neg / n_pos if n_pos else 1.0
        return max(1.0, spw) if self.class_weighting == "spw_floor1" else spw


PRESETS: dict[str, GbdtConfig] = {
    "catboost-like": GbdtConfig(n_trees=600, max_depth=6, learning_rate=0.05, l2_leaf_reg=3.0),
    "xgboost-like": GbdtConfig(
        n_trees=400, max_depth=5, learning_rate=0.05, subsample=0.8, colsample=0.8,
        min_child_weight=5.0, l2_leaf_reg=1.5, gamma=0.2,
    ),
    "fusion-meta": GbdtConfig(
        n_trees=10, max_depth=2, learning_rate=0.08, l2_leaf_reg=1.0, min_child_weight=1.0,
        class_weighting="spw",
    ),
}


def preset(name: str) -> GbdtConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}") from None


@dataclass
class Tree:
    """
    Flat binary tree. Node 0 is the root; feature == -1 marks a leaf.

    Rows go left when x <= threshold, or when x is missing and
    default_left is set.
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    default_left: list[bool] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)

    def add_leaf(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.default_left.append(True)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.gain.append(0.0)
        return len(self.feature) - 1

    def depth(self) -> int:
        def walk(node: int) -> int:
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        default_left = np.asarray(self.default_left)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)

        node = np.zeros(len(X), dtype=int)
        for _ in range(self.depth()):
            feat = feature[node]
            rows = np.flatnonzero(feat >= 0)
            if len(rows) == 0:
                break
            at = node[rows]
            xv = X[rows, feat[rows]]
            missing = np.isnan(xv)
            with np.errstate(invalid="ignore"):
                go_left = np.where(missing, default_left[at], xv <= threshold[at])
            node[rows] = np.where(go_left, left[at], right[at])
        return value[node]

    def to_dict(self, node: int = 0) -> dict:
        """Nested-node form used for serialization."""
        if self.feature[node] < 0:
            return {"leaf": self.value[node]}
        return {
            "feature": self.feature[node],
            "threshold": self.threshold[node],
            "default_left": self.default_left[node],
            "gain": self.gain[node],
            "left": self.to_dict(self.left[node]),
            "right": self.to_dict(self.right[node]),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        tree = cls()

        def build(d: dict) -> int:
            if "leaf" in d:
                return tree.add_leaf(d["leaf"])
            node = tree.add_leaf(0.0)
            tree.feature[node] = int(d["feature"])
            tree.threshold[node] = float(d["threshold"])
            tree.default_left[node] = bool(d["default_left"])
            tree.gain[node] = float(d.get("gain", 0.0))
            tree.left[node] = build(d["left"])
            tree.right[node] = build(d["right"])
            return node

        build(data)
        return tree


@dataclass
class _Split:
    feature: int
    bin: int
    threshold: float
    default_left: bool
    gain: float


@dataclass(frozen=True)
class _BinnedMatrix:
    """
    Quantile-binned copy of the training matrix.

    codes[i, j] indexes edges[j]: row i falls in bin b of feature j when
    edges[j][b - 1] < X[i, j] <= edges[j][b]. Missing values get code
    missing_code. Every edge is an observed training value.
    """

    codes: np.ndarray
    flat: np.ndarray
    edges: list[np.ndarray]
    missing_code: int

    @property
    def n_slots(self) -> int:
        return self.missing_code + 1


def _bin_edges(column: np.ndarray, max_bins: int) -> np.ndarray:
    values = np.sort(column[~np.isnan(column)])
    if len(values) == 0:
        return np.array([np.inf])
    unique = np.unique(values)
    if len(unique) <= max_bins:
        return unique
    # rank-based cut points so strictly increasing transforms keep the same bins
    picks = np.ceil(np.linspace(0, len(values) - 1, max_bins + 1)[1:]).astype(int)
    return np.unique(values[picks])


def bin_matrix(X: np.ndarray, max_bins: int = 256) -> _BinnedMatrix:
    """Bin every column of X on its own quantiles."""
    n, d = X.shape
    codes = np.full((n, d), max_bins, dtype=np.int32)
    edges = []
    for j in range(d):
        col_edges = _bin_edges(X[:, j], max_bins)
        finite = ~np.isnan(X[:, j])
        codes[finite, j] = np.searchsorted(col_edges, X[finite, j], side="left")
        edges.append(col_edges)
    flat = codes + (np.arange(d, dtype=np.int32) * (max_bins + 1))[None, :]
    return _BinnedMatrix(codes=codes, flat=flat, edges=edges, missing_code=max_bins)


class _TreeBuilder:
    """Grows one tree on fixed gradients/hessians from per-node histograms."""

    def __init__(self, binned: _BinnedMatrix, g, h, cols: np.ndarray, config: GbdtConfig):
        self.binned = binned
        self.g = g
        self.h = h
        self.cfg = config
        self.tree = Tree()
        self.active = np.zeros(binned.codes.shape[1], dtype=bool)
        self.active[cols] = True

    def _leaf_value(self, G: float, H: float) -> float:
        denom = H + self.cfg.l2_leaf_reg
        if denom <= 0:
            return 0.0
        return -G / denom * self.cfg.learning_rate

    def _score(self, G, H):
        denom = H + self.cfg.l2_leaf_reg
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 0, G * G / denom, 0.0)

    def _histogram(self, rows: np.ndarray) -> np.ndarray:
        """Gradient, hessian and count sums per (feature, bin), shape (3, d, n_slots)."""
        d = self.binned.codes.shape[1]
        size = d * self.binned.n_slots
        idx = self.binned.flat[rows].ravel()
        hist = np.stack([
            np.bincount(idx, weights=np.repeat(self.g[rows], d), minlength=size),
            np.bincount(idx, weights=np.repeat(self.h[rows], d), minlength=size),
            np.bincount(idx, minlength=size).astype(float),
        ])
        return hist.reshape(3, d, self.binned.n_slots)

    def _best_split(self, hist: np.ndarray, G: float, H: float) -> Optional[_Split]:
        cfg = self.cfg
        m = self.binned.missing_code
        parent = float(self._score(np.array(G), np.array(H)))

        cg = np.cumsum(hist[0, :, :m], axis=1)
        ch = np.cumsum(hist[1, :, :m], axis=1)
        cn = np.cumsum(hist[2, :, :m], axis=1)
        # both sides need at least one finite row
        splittable = (cn > 0) & (cn < cn[:, -1:]) & self.active[:, None]
        has_missing = hist[2, :, m] > 0
        G_miss = np.where(has_missing, hist[0, :, m], 0.0)[:, None]
        H_miss = np.where(has_missing, hist[1, :, m], 0.0)[:, None]

        gains = []
        for default_left in (True, False):
            GL = cg + (G_miss if default_left else 0.0)
            HL = ch + (H_miss if default_left else 0.0)
            GR = G - GL
            HR = H - HL
            gain = 0.5 * (self._score(GL, HL) + self._score(GR, HR) - parent) - cfg.gamma
            ok = splittable & (HL >= cfg.min_child_weight) & (HR >= cfg.min_child_weight) & np.isfinite(gain)
            if default_left:
                ok &= has_missing[:, None]
            gains.append(np.where(ok, gain, -np.inf))
        stacked = np.stack(gains, axis=1)

        j, direction, b = np.unravel_index(int(np.argmax(stacked)), stacked.shape)
        best = float(stacked[j, direction, b])
        if not best > 1e-12 * max(parent, 1.0):
            return None
        if has_missing[j]:
            default_left = direction == 0
        else:
            # no missing values seen: send them to the heavier side
            default_left = ch[j, b] >= H - ch[j, b]
        return _Split(int(j), int(b), float(self.binned.edges[j][b]), bool(default_left), best)

    def grow(self, rows: np.ndarray, depth: int, hist: Optional[np.ndarray] = None) -> int:
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        split = None
        if depth < self.cfg.max_depth and len(rows) >= 2:
            if hist is None:
                hist = self._histogram(rows)
            split = self._best_split(hist, G, H)
        if split is None:
            return self.tree.add_leaf(self._leaf_value(G, H))

        codes = self.binned.codes[rows, split.feature]
        missing = codes == self.binned.missing_code
        go_left = np.where(missing, split.default_left, codes <= split.bin)
        left_rows, right_rows = rows[go_left], rows[~go_left]

        left_hist = right_hist = None
        if depth + 1 < self.cfg.max_depth:
            # build the smaller child, derive the sibling by subtraction
            if len(left_rows) <= len(right_rows):
                left_hist = self._histogram(left_rows)
                right_hist = hist - left_hist
            else:
                right_hist = self._histogram(right_rows)
                left_hist = hist - right_hist

        node = self.tree.add_leaf(0.0)
        self.tree.feature[node] = split.feature
        self.tree.threshold[node] = split.threshold
        self.tree.default_left[node] = split.default_left
        self.tree.gain[node] = split.gain
        self.tree.left[node] = self.grow(left_rows, depth + 1, left_hist)
        self.tree.right[node] = self.grow(right_rows, depth + 1, right_hist)
        return node


@dataclass
class GradientBoostedTrees:
    """Fitted booster: probability = sigmoid(base_score + sum of tree outputs)."""

    n_features: int
    base_score: float = 0.0
    trees: list[Tree] = field(default_factory=list)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got shape {X.shape}")
        score = np.full(len(X), self.base_score)
        for tree in self.trees:
            score += tree.predict(X)
        return score

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    def gain_importance(self) -> np.ndarray:
        """Total split gain per feature."""
        total = np.zeros(self.n_features)
        for tree in self.trees:
            for feat, gain in zip(tree.feature, tree.gain):
                if feat >= 0:
                    total[feat] += gain
        return total

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "base_score": self.base_score,
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GradientBoostedTrees":
        return cls(
            n_features=int(data["n_features"]),
            base_score=float(data["base_score"]),
            trees=[Tree.from_dict(t) for t in data["trees"]],
        )


def fit_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    w: Optional[np.ndarray],
    config: GbdtConfig,
    seed: int = 0,
) -> GradientBoostedTrees:
    """
    Fit boosted trees to binary labels under logistic loss.

    Args:
        X: Feature matrix (n_samples, n_features); NaN = missing
        y: Labels in {0, 1}
        w: Per-sample weights (None = all ones), applied to gradients and hessians
        config: Hyperparameters
        seed: Seed for row and column subsampling

    Returns:
        Fitted GradientBoostedTrees

    Raises:
        DataError: If X is empty, shapes disagree or y has a single class
        ConfigError: If the configuration is invalid
    """
    config.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise DataError(f"training matrix must be non-empty 2-D, got shape {X.shape}")
    if len(y) != len(X):
        raise DataError(f"Length mismatch: X ({len(X)}) != y ({len(y)})")
    if set(np.unique(y)) != {0.0, 1.0}:
        raise DataError("training labels must contain both classes 0 and 1")
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    if len(w) != len(y) or np.any(w < 0):
        raise DataError("sample weights must be non-negative and match y")

    n, d = X.shape
    rng = np.random.default_rng(seed)
    binned = bin_matrix(X, config.max_bins)

    rate = float(np.clip(np.sum(w * y) / np.sum(w), 1e-6, 1 - 1e-6))
    model = GradientBoostedTrees(n_features=d, base_score=float(logit(rate)))
    score = np.full(n, model.base_score)

    n_rows = max(1, int(round(config.subsample * n)))
    n_cols = max(1, int(round(config.colsample * d)))

    for _ in range(config.n_trees):
        p = expit(score)
        g = w * (p - y)
        h = w * p * (1.0 - p)

        if n_rows < n:
            rows = np.sort(rng.choice(n, size=n_rows, replace=False))
        else:
            rows = np.arange(n)
        cols = np.sort(rng.choice(d, size=n_cols, replace=False)) if n_cols < d else np.arange(d)

        builder = _TreeBuilder(binned, g, h, cols, config)
        builder.grow(rows, depth=0)
        model.trees.append(builder.tree)
        score += builder.tree.predict(X)

    logger.debug("fitted %d trees on %d x %d", len(model.trees), n, d)
    return model


def config_to_dict(config: GbdtConfig) -> dict:
    return asdict(config)


def config_from_dict(data: dict) -> GbdtConfig:
    try:
        return GbdtConfig(**data).validate()
    except TypeError as exc:
        raise ConfigError(f"invalid GBDT config: {exc}") from None

