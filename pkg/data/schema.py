from dataclasses import dataclass, field, replace
import hashlib
import json
import logging

import numpy as np
import pandas as pd

from common.errors import ValidationError

logger = logging.getLogger(__name__)

CATEGORICAL = "categorical"
NUMERIC_BINNED = "numeric-binned"


@dataclass(frozen=True)
class ColumnSpec:
    """
    One feature column. Encoded values lie in [0, cardinality]; 0 is the unseen slot.

    name: str
        column name in the raw table
    kind: str
        CATEGORICAL or NUMERIC_BINNED
    cardinality: int
        distinct observed values (categorical) or bin count (numeric-binned)
    vocabulary: tuple[str, ...]
        categorical values in index order, vocabulary[i] encodes to i + 1
    bin_edges: tuple[float, ...] | None
        strictly increasing interior quantile edges, present iff numeric-binned
    """

    name: str
    kind: str
    cardinality: int
    vocabulary: tuple[str, ...] = ()
    bin_edges: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERIC_BINNED):
            raise ValidationError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.cardinality < 1:
            raise ValidationError(f"column {self.name!r}: cardinality must be >= 1")
        if self.kind == NUMERIC_BINNED:
            if self.bin_edges is None:
                raise ValidationError(f"column {self.name!r}: numeric-binned needs bin edges")
            if np.any(np.diff(self.bin_edges) <= 0):
                raise ValidationError(f"column {self.name!r}: bin edges must be strictly increasing")
            if self.cardinality != len(self.bin_edges) + 1:
                raise ValidationError(f"column {self.name!r}: cardinality must equal len(bin_edges) + 1")
        else:
            if self.bin_edges is not None:
                raise ValidationError(f"column {self.name!r}: categorical column cannot carry bin edges")
            if len(self.vocabulary) != self.cardinality:
                raise ValidationError(f"column {self.name!r}: vocabulary size must equal cardinality")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "cardinality": self.cardinality,
            "vocabulary": list(self.vocabulary),
            "bin_edges": None if self.bin_edges is None else [float(e) for e in self.bin_edges],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ColumnSpec":
        edges = payload.get("bin_edges")
        return cls(
            name=payload["name"],
            kind=payload["kind"],
            cardinality=int(payload["cardinality"]),
            vocabulary=tuple(payload.get("vocabulary") or ()),
            bin_edges=None if edges is None else tuple(float(e) for e in edges),
        )


@dataclass(frozen=True)
class DatasetSchema:
    """
    Feature columns (X = (C, Y)) plus the evaluation-only label column.

    columns: tuple[ColumnSpec, ...]
        feature columns in encoded-matrix order; the label column is not among them
    label_column: str
        binary anomaly label, used only for evaluation
    positive_label: str
        raw literal that marks an anomaly
    candidate_context_columns: tuple[str, ...]
        columns context selection may condition on
    """

    columns: tuple[ColumnSpec, ...]
    label_column: str
    positive_label: str = "1"
    candidate_context_columns: tuple[str, ...] = field(default=())

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError("column names must be unique")
        if self.label_column in names:
            raise ValidationError(f"label column {self.label_column!r} cannot also be a feature")
        if self.label_column in self.candidate_context_columns:
            raise ValidationError(f"label column {self.label_column!r} cannot be a context candidate")
        unknown = [c for c in self.candidate_context_columns if c not in names]
        if unknown:
            raise ValidationError(f"unknown context candidates: {unknown}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def position(self, name: str) -> int:
        for i, column in enumerate(self.columns):
            if column.name == name:
                return i
        raise ValidationError(f"unknown column {name!r}")

    def column(self, name: str) -> ColumnSpec:
        return self.columns[self.position(name)]

    def with_columns(self, columns) -> "DatasetSchema":
        return replace(self, columns=tuple(columns))

    def to_dict(self) -> dict:
        return {
            "columns": [c.to_dict() for c in self.columns],
            "label_column": self.label_column,
            "positive_label": self.positive_label,
            "candidate_context_columns": list(self.candidate_context_columns),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DatasetSchema":
        return cls(
            columns=tuple(ColumnSpec.from_dict(c) for c in payload["columns"]),
            label_column=payload["label_column"],
            positive_label=str(payload.get("positive_label", "1")),
            candidate_context_columns=tuple(payload.get("candidate_context_columns") or ()),
        )


def schema_fingerprint(schema: DatasetSchema) -> str:
    """SHA-256 over the canonical JSON form of the schema, vocabularies included."""
    canonical = json.dumps(schema.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def quantile_edges(values: np.ndarray, numeric_bins: int) -> tuple[float, ...]:
    """
    Interior quantile edges splitting `values` into `numeric_bins` bins.
    Repeated quantiles collapse, so heavy ties can yield fewer bins.
    """
    probs = np.linspace(0.0, 1.0, numeric_bins + 1)[1:-1]
    edges = np.unique(np.quantile(values, probs))
    return tuple(float(e) for e in edges)


def categorical_vocabulary(cells: pd.Series) -> tuple[str, ...]:
    """Sorted distinct values; sorting keeps the encoding independent of row order."""
    return tuple(sorted(cells.unique().tolist()))


def infer_column(name: str, cells: pd.Series, numeric_bins: int) -> ColumnSpec:
    numeric = pd.to_numeric(cells, errors="coerce")
    distinct = cells.nunique()
    if len(cells) and numeric.notna().all() and distinct > numeric_bins:
        edges = quantile_edges(numeric.to_numpy(dtype=np.float64), numeric_bins)
        return ColumnSpec(name=name, kind=NUMERIC_BINNED, cardinality=len(edges) + 1, bin_edges=edges)
    vocabulary = categorical_vocabulary(cells)
    return ColumnSpec(name=name, kind=CATEGORICAL, cardinality=len(vocabulary), vocabulary=vocabulary)


def infer_schema(
    raw_table: pd.DataFrame,
    numeric_bins: int = 10,
    label_column: str = "label",
    positive_label: str = "1",
    candidate_context_columns: list[str] | None = None,
    drop_columns: list[str] | None = None,
) -> DatasetSchema:
    """
    Infers a schema from a string-typed raw table.

    Columns parsing entirely as numbers with more than `numeric_bins` distinct
    values become numeric-binned with quantile edges; all others are categorical.

    raw_table: pd.DataFrame
        header + string cells (see data.utils.read_raw_table)
    numeric_bins: int
        bin count for numeric columns
    label_column: str
        anomaly label column, excluded from the features
    candidate_context_columns: list[str] | None
        defaults to every feature column
    drop_columns: list[str] | None
        raw columns ignored entirely
    """
    if numeric_bins < 1:
        raise ValidationError("numeric_bins must be a positive integer")
    if raw_table.columns.duplicated().any():
        dupes = sorted(set(raw_table.columns[raw_table.columns.duplicated()]))
        raise ValidationError(f"duplicate column names: {dupes}")
    if raw_table.shape[0] == 0 or raw_table.shape[1] == 0:
        raise ValidationError("raw table is empty")
    if label_column not in raw_table.columns:
        raise ValidationError(f"label column {label_column!r} not in table header")

    dropped = set(drop_columns or ())
    columns = []
    for name in raw_table.columns:
        if name == label_column or name in dropped:
            continue
        spec = infer_column(name, raw_table[name], numeric_bins)
        logger.debug("column %s: %s, cardinality %d", name, spec.kind, spec.cardinality)
        columns.append(spec)
    if not columns:
        raise ValidationError("table has no feature columns besides the label")

    names = [c.name for c in columns]
    candidates = names if candidate_context_columns is None else list(candidate_context_columns)
    return DatasetSchema(
        columns=tuple(columns),
        label_column=label_column,
        positive_label=str(positive_label),
        candidate_context_columns=tuple(candidates),
    )
