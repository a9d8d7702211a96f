"""
Subject-level fusion.

Logit-mean pooling of window probabilities, per-fold threshold
calibration, and consensus-first stacking of the ocular and cardiac
subject scores.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from core.gbdt import GbdtConfig, preset
from core.learners import TrainedModel, predict_proba, train_gbdt
from core.models import Modality

logger = logging.getLogger(__name__)

POOL_EPS = 1e-6
META_FEATURES = ["p_ocular", "p_cardiac"]


@dataclass(frozen=True)
class SubjectScore:
    """Pooled prediction for one participant; y_hat == (p >= tau) always holds."""

    participant_id: str
    modality: Modality
    p: float
    tau: float
    y_hat: int
    y_true: int

    def __post_init__(self):
        if self.y_hat != int(self.p >= self.tau):
            raise ValueError(
                f"{self.participant_id}: y_hat={self.y_hat} inconsistent with p={self.p} tau={self.tau}"
            )

    @classmethod
    def decide(cls, participant_id: str, modality: Modality, p: float, tau: float, y_true: int) -> "SubjectScore":
        return cls(participant_id, Modality(modality), float(p), float(tau), int(p >= tau), int(y_true))


def logit_mean_pool(probabilities: Sequence[float]) -> float:
    """
    Pool window probabilities into one subject probability.

    Probabilities are clamped to [1e-6, 1 - 1e-6], averaged in logit space
    and mapped back with the sigmoid.

    Raises:
        ValueError: If no probability is given

    Examples:
        >>> logit_mean_pool([0.9, 0.1])
        0.5
    """
    p = np.asarray(probabilities, dtype=float)
    if len(p) == 0:
        raise ValueError("logit_mean_pool needs at least one probability")
    p = np.clip(p, POOL_EPS, 1.0 - POOL_EPS)
    return float(expit(np.mean(logit(p))))


def pool_by_participant(participants: Sequence[str], probabilities: Sequence[float]) -> dict[str, float]:
    """Logit-mean pool window probabilities per participant, keyed in sorted order."""
    frame = pd.DataFrame({"participant": list(participants), "p": np.asarray(probabilities, dtype=float)})
    return {
        pid: logit_mean_pool(group["p"].to_numpy())
        for pid, group in frame.groupby("participant", sort=True)
    }


def balanced_accuracy(y_true: Sequence[int], y_hat: Sequence[int]) -> float:
    y_true = np.asarray(y_true, dtype=int)
    y_hat = np.asarray(y_hat, dtype=int)
    recalls = [np.mean(y_hat[y_true == c] == c) for c in (0, 1) if np.any(y_true == c)]
    return float(np.mean(recalls)) if recalls else 0.0


def calibrate_threshold(p: Sequence[float], y_true: Sequence[int]) -> float:
    """
    Decision threshold maximising balanced accuracy.

    Candidates are the midpoints between consecutive distinct scores plus
    0.5. Ties go to the candidate closest to 0.5, then to the smaller one.

    Args:
        p: Subject probabilities from training-side predictions
        y_true: Matching labels

    Returns:
        tau; 0.5 (with a warning) when only one class is present

    Examples:
        >>> calibrate_threshold([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        0.5
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y_true, dtype=int)
    if len(p) != len(y):
        raise ValueError(f"Length mismatch: p ({len(p)}) != y_true ({len(y)})")
    if len(set(y.tolist())) < 2:
        logger.warning("threshold calibration saw a single class; using tau = 0.5")
        return 0.5

    distinct = np.unique(p)
    candidates = np.unique(np.concatenate([(distinct[:-1] + distinct[1:]) / 2.0, [0.5]]))
    best_tau, best_key = 0.5, None
    for tau in candidates:
        bacc = balanced_accuracy(y, (p >= tau).astype(int))
        key = (-bacc, abs(tau - 0.5), tau)
        if best_key is None or key < best_key:
            best_tau, best_key = float(tau), key
    return best_tau


def train_fusion_meta(
    pairs: pd.DataFrame,
    config: Optional[GbdtConfig] = None,
    seed: int = 0,
    use_consensus: bool = True,
) -> tuple[Optional[TrainedModel], float]:
    """
    Fit the stacking meta-classifier on training-side subject scores.

    Args:
        pairs: Rows with p_ocular, p_cardiac, y_hat_ocular, y_hat_cardiac, y_true
        config: Meta-model hyperparameters (default 'fusion-meta')
        seed: Training seed
        use_consensus: Train on disagreement rows only when True

    Returns:
        (meta model, tau_fusion); (None, 0.5) when the rows cannot train a
        model (fewer than 2 rows or a single class)
    """
    rows = pairs
    if use_consensus:
        rows = pairs[pairs["y_hat_ocular"] != pairs["y_hat_cardiac"]]
    if len(rows) < 2 or rows["y_true"].nunique() < 2:
        logger.info("no trainable meta-model (%d rows); disagreements fall back to averaging", len(rows))
        return None, 0.5

    meta = train_gbdt(
        rows[META_FEATURES], rows["y_true"].to_numpy(), config=config or preset("fusion-meta"), seed=seed
    )
    tau = calibrate_threshold(predict_proba(meta, rows[META_FEATURES]), rows["y_true"].to_numpy())
    return meta, tau


def _average(participant_id: str, ocular: SubjectScore, cardiac: SubjectScore) -> SubjectScore:
    return SubjectScore.decide(
        participant_id,
        Modality.FUSED,
        (ocular.p + cardiac.p) / 2.0,
        (ocular.tau + cardiac.tau) / 2.0,
        ocular.y_true,
    )


def consensus_fuse(
    ocular: Optional[SubjectScore],
    cardiac: Optional[SubjectScore],
    meta: Optional[TrainedModel],
    tau_fusion: float,
    use_consensus: bool = True,
) -> SubjectScore:
    """
    Fuse the two unimodal subject scores, consensus first.

    When the unimodal labels agree the fused label is the agreed one, with
    p and tau the means of the unimodal values. Otherwise the meta-model
    scores [p_ocular, p_cardiac] against tau_fusion; without a meta-model
    the averaging rule applies. With use_consensus=False every subject goes
    to the meta-model.

    Args:
        ocular: Ocular subject score (None if unavailable)
        cardiac: Cardiac subject score (None if unavailable)
        meta: Stacking meta-model or None
        tau_fusion: Threshold for meta-model probabilities
        use_consensus: Apply the agreement gate

    Returns:
        Fused SubjectScore

    Raises:
        ValueError: If both scores are missing
    """
    if ocular is None and cardiac is None:
        raise ValueError("consensus_fuse needs at least one modality score")
    if ocular is None or cardiac is None:
        available = ocular if ocular is not None else cardiac
        logger.warning(
            "%s: %s score missing, fused prediction falls back to %s",
            available.participant_id,
            "ocular" if ocular is None else "cardiac",
            available.modality.value,
        )
        return SubjectScore.decide(
            available.participant_id, Modality.FUSED, available.p, available.tau, available.y_true
        )

    pid = ocular.participant_id
    if use_consensus and ocular.y_hat == cardiac.y_hat:
        return _average(pid, ocular, cardiac)
    if meta is None:
        return _average(pid, ocular, cardiac)

    p = float(predict_proba(meta, np.array([[ocular.p, cardiac.p]]))[0])
    return SubjectScore.decide(pid, Modality.FUSED, p, tau_fusion, ocular.y_true)
