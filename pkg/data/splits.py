from dataclasses import dataclass
import logging

import numpy as np

from common.errors import ValidationError
from data.encode import EncodedTable, Split

logger = logging.getLogger(__name__)

DEFAULT_VAL_FRACTION = 0.1
DEFAULT_TEST_FRACTION = 0.2


def split_dataset(
    table: EncodedTable,
    val_fraction: float = DEFAULT_VAL_FRACTION,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    seed: int = 0,
) -> EncodedTable:
    """
    Assigns train/val/test tags. Every anomaly goes to test; normal rows are
    shuffled with `seed` and cut into val, test and train (the remainder).

    table: EncodedTable
        encoded rows, any existing split is replaced
    val_fraction: float
        share of normal rows held out anomaly-free for validation
    test_fraction: float
        share of normal rows mixed with the anomalies for testing
    seed: int
        shuffle seed, fixing the seed fixes the tags
    """
    if not (0.0 < val_fraction < 1.0 and 0.0 < test_fraction < 1.0):
        raise ValidationError("val_fraction and test_fraction must lie in (0, 1)")
    if val_fraction + test_fraction >= 1.0:
        raise ValidationError("val_fraction + test_fraction must be < 1")

    normal = np.flatnonzero(table.labels == 0)
    if normal.size == 0:
        raise ValidationError("dataset has zero normal rows")

    rng = np.random.default_rng(seed)
    shuffled = normal[rng.permutation(normal.size)]
    n_val = int(round(val_fraction * normal.size))
    n_test = int(round(test_fraction * normal.size))
    if n_val + n_test >= normal.size:
        raise ValidationError(f"only {normal.size} normal rows, nothing left for training")

    split = np.full(table.n_rows, Split.TEST, dtype=np.uint8)
    split[shuffled[:n_val]] = Split.VAL
    split[shuffled[n_val + n_test:]] = Split.TRAIN

    logger.info(
        "split %d rows: train %d, val %d, test %d (%d anomalies)",
        table.n_rows,
        normal.size - n_val - n_test,
        n_val,
        n_test + int(table.labels.sum()),
        int(table.labels.sum()),
    )
    return table.with_split(split)


@dataclass(frozen=True)
class ContextDistribution:
    """
    Add-one smoothed P(C) over indices 0..cardinality, from train rows only.

    column: str
        context column
    probabilities: np.ndarray
        probabilities[i] = P(C = i), index 0 being the unseen slot
    """

    column: str
    probabilities: np.ndarray
    smoothing: str = "add-one"

    def probability(self, index: int) -> float:
        return float(self.probabilities[index])

    def neg_log(self, values: np.ndarray) -> np.ndarray:
        """-log P(c) per value."""
        return -np.log(self.probabilities[np.asarray(values, dtype=np.int64)])


def context_distribution(table: EncodedTable, column: str) -> ContextDistribution:
    """
    P(c) = (count(c) + 1) / (n_train + cardinality + 1) over the train split.

    table: EncodedTable
        split dataset
    column: str
        context column
    """
    if column not in table.schema.names:
        raise ValidationError(f"unknown column {column!r}")
    values = table.column(column, Split.TRAIN)
    if values.size == 0:
        raise ValidationError("train split is empty")
    cardinality = table.schema.column(column).cardinality
    counts = np.bincount(values, minlength=cardinality + 1).astype(np.float64)
    probabilities = (counts + 1.0) / (values.size + cardinality + 1.0)
    return ContextDistribution(column=column, probabilities=probabilities)
