from dataclasses import dataclass
import logging

import numpy as np
import pandas as pd

from common.errors import ValidationError
from selection.context import NO_CONTEXT

logger = logging.getLogger(__name__)

# keeps ratios finite when a group's max training loss underflows to zero
THRESHOLD_FLOOR = 1e-12


@dataclass(frozen=True)
class ThresholdTable:
    """
    Per-context-value thresholds H_c, the max training score of each group.

    context_column: str
        column the groups come from, NO_CONTEXT for a single global group
    thresholds: dict[int, float]
        encoded context value -> H_c
    global_fallback: float
        max training score overall, used for context values without a group
    """

    context_column: str
    thresholds: dict[int, float]
    global_fallback: float

    def lookup(self, context_values: np.ndarray | None, n: int) -> np.ndarray:
        if context_values is None or not self.thresholds:
            return np.full(n, self.global_fallback)
        values = pd.Series(np.asarray(context_values, dtype=np.int64))
        return values.map(self.thresholds).fillna(self.global_fallback).to_numpy(dtype=np.float64)

    def stats(self) -> dict:
        h = np.array(list(self.thresholds.values()) or [self.global_fallback])
        return {
            "context_column": self.context_column,
            "groups": len(self.thresholds),
            "min": float(h.min()),
            "max": float(h.max()),
            "mean": float(h.mean()),
            "global_fallback": self.global_fallback,
        }


@dataclass(frozen=True)
class ScoreRecords:
    """Column-oriented score records, one entry per test row."""

    row_ids: np.ndarray
    scores: np.ndarray
    context_values: np.ndarray | None
    ratios: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.scores.shape[0]


def fit_thresholds(
    scores: np.ndarray,
    context_values: np.ndarray | None = None,
    context_column: str = NO_CONTEXT,
) -> ThresholdTable:
    """
    H_c = max training score within each context value; without context
    values there is one global threshold.

    scores: np.ndarray
        per-row training anomaly scores
    context_values: np.ndarray | None
        encoded context value of each training row
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValidationError("cannot fit thresholds on zero training scores")
    fallback = max(float(scores.max()), THRESHOLD_FLOOR)
    if context_values is None:
        return ThresholdTable(context_column=NO_CONTEXT, thresholds={}, global_fallback=fallback)

    grouped = pd.Series(scores).groupby(np.asarray(context_values, dtype=np.int64)).max()
    thresholds = {int(c): max(float(h), THRESHOLD_FLOOR) for c, h in grouped.items()}
    logger.debug("fitted %d contextual thresholds on %s", len(thresholds), context_column)
    return ThresholdTable(context_column=context_column, thresholds=thresholds, global_fallback=fallback)


def contextual_ratios(
    scores: np.ndarray,
    table: ThresholdTable,
    labels: np.ndarray,
    context_values: np.ndarray | None = None,
    row_ids: np.ndarray | None = None,
) -> ScoreRecords:
    """R = score / H_c, falling back to the global threshold for unseen groups."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    thresholds = table.lookup(context_values, n)
    return ScoreRecords(
        row_ids=np.arange(n) if row_ids is None else np.asarray(row_ids),
        scores=scores,
        context_values=None if context_values is None else np.asarray(context_values, dtype=np.int64),
        ratios=scores / thresholds,
        labels=np.asarray(labels, dtype=np.int8),
    )
