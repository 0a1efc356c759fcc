from dataclasses import dataclass
import logging

import numpy as np
from scipy.integrate import trapezoid

from common.errors import DegenerateLabelsError
from evaluation.thresholds import ScoreRecords

logger = logging.getLogger(__name__)

GRID_STEPS = 100


@dataclass(frozen=True)
class RocReport:
    """
    thresholds: np.ndarray
        tau_k = 0.01 * k * max(R), k = 1..100
    fpr / tpr: np.ndarray
        rates at each threshold, predicting anomalous iff R > tau_k
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    aucroc: float
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return {"aucroc": self.aucroc, "n_pos": self.n_pos, "n_neg": self.n_neg}


def _split_classes(ratios: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    pos, neg = ratios[labels == 1], ratios[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise DegenerateLabelsError(
            f"AUC needs both classes, got {pos.size} anomalies and {neg.size} normal rows",
            hint="check the test split contains anomalies",
        )
    return pos, neg


def aucroc_grid(records: ScoreRecords, steps: int = GRID_STEPS) -> RocReport:
    """
    ROC over `steps` evenly spaced thresholds relative to max(R), integrated
    with the trapezoid rule after sorting the points by FPR and adding the
    (0, 0) and (1, 1) corners.

    records: ScoreRecords
        contextual ratios with labels
    """
    ratios = np.asarray(records.ratios, dtype=np.float64)
    pos, neg = _split_classes(ratios, records.labels)

    thresholds = np.arange(1, steps + 1) / steps * ratios.max()
    tpr = (pos[None, :] > thresholds[:, None]).mean(axis=1)
    fpr = (neg[None, :] > thresholds[:, None]).mean(axis=1)

    x = np.concatenate([[0.0], fpr, [1.0]])
    y = np.concatenate([[0.0], tpr, [1.0]])
    order = np.lexsort((y, x))
    auc = float(trapezoid(y[order], x[order]))
    logger.debug("grid AUCROC %.4f over %d positives / %d negatives", auc, pos.size, neg.size)
    return RocReport(thresholds=thresholds, fpr=fpr, tpr=tpr, aucroc=auc, n_pos=int(pos.size), n_neg=int(neg.size))


def exact_auc(records: ScoreRecords) -> float:
    """Mann-Whitney AUC: P(R_pos > R_neg) + 0.5 * P(tie), by exhaustive pair counting."""
    ratios = np.asarray(records.ratios, dtype=np.float64)
    pos, neg = _split_classes(ratios, records.labels)
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * ties) / (pos.size * neg.size))
