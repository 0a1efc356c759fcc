"""Law-of-total-variance diagnostic: how much of each content dimension's spread a context explains."""

from dataclasses import dataclass
import logging

import numpy as np
import pandas as pd

from common.errors import ValidationError
from data.encode import EncodedTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VarianceDecomposition:
    """
    Per-dimension population variances; total = within + between.

    dimensions: list[str]
        content dimension names (one-hot "column=index" for encoded data)
    """

    dimensions: list[str]
    total: np.ndarray
    within: np.ndarray
    between: np.ndarray

    @property
    def within_ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.total > 0, self.within / np.where(self.total > 0, self.total, 1.0), 0.0)

    def summary(self) -> dict:
        total = float(self.total.sum())
        return {
            "total": total,
            "within": float(self.within.sum()),
            "between": float(self.between.sum()),
            "within_ratio": float(self.within.sum() / total) if total > 0 else 0.0,
        }


def decompose(values: np.ndarray, groups: np.ndarray, dimensions: list[str] | None = None) -> VarianceDecomposition:
    """
    values: np.ndarray
        (n,) or (n, m) numeric content
    groups: np.ndarray
        (n,) context value of each row
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    groups = np.asarray(groups)
    n = values.shape[0]
    if n < 2:
        raise ValidationError("variance decomposition needs at least 2 rows")
    if groups.shape != (n,):
        raise ValidationError("one group label per row is required")

    frame = pd.DataFrame(values)
    grouped = frame.groupby(groups, sort=True)
    weights = grouped.size().to_numpy(dtype=np.float64) / n
    means = grouped.mean().to_numpy()
    variances = grouped.var(ddof=0).to_numpy()

    overall = values.mean(axis=0)
    total = values.var(axis=0)
    within = weights @ variances
    between = weights @ (means - overall) ** 2
    names = dimensions if dimensions is not None else [str(j) for j in range(values.shape[1])]
    return VarianceDecomposition(dimensions=names, total=total, within=within, between=between)


def variance_decomposition(data: EncodedTable, context_column: str) -> VarianceDecomposition:
    """
    Decomposes the one-hot expansion of every other column by the groups of
    `context_column`.
    """
    if context_column not in data.schema.names:
        raise ValidationError(f"unknown context column {context_column!r}")
    groups = data.column(context_column)
    blocks, names = [], []
    for spec in data.schema.columns:
        if spec.name == context_column:
            continue
        col = data.column(spec.name)
        present = np.unique(col)
        blocks.append((col[:, None] == present[None, :]).astype(np.float64))
        names += [f"{spec.name}={v}" for v in present]
    if not blocks:
        raise ValidationError("no content columns to decompose")
    result = decompose(np.concatenate(blocks, axis=1), groups, names)
    logger.info("variance given %s: %s", context_column, result.summary())
    return result
