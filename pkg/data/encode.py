from dataclasses import dataclass, replace
from enum import IntEnum
import logging

import numpy as np
import pandas as pd

from common.errors import ValidationError
from data.schema import (
    CATEGORICAL,
    ColumnSpec,
    DatasetSchema,
    categorical_vocabulary,
)

logger = logging.getLogger(__name__)

# Index 0 of every column is reserved for values the vocabulary has not seen.
UNSEEN = 0

FIT = "fit"
EXISTING = "existing"


class Split(IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2


@dataclass(frozen=True)
class EncodedTable:
    """
    Integer-indexed dataset.

    schema: DatasetSchema
        schema the rows were encoded against
    rows: np.ndarray
        (n, d) int64 indices, column j in [0, schema.columns[j].cardinality]
    labels: np.ndarray
        (n,) int8, 1 = anomaly
    split: np.ndarray
        (n,) uint8 Split tags
    """

    schema: DatasetSchema
    rows: np.ndarray
    labels: np.ndarray
    split: np.ndarray

    def __post_init__(self):
        n, d = self.rows.shape
        if d != len(self.schema.columns):
            raise ValidationError(f"rows have {d} columns, schema has {len(self.schema.columns)}")
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise ValidationError("labels and split must have one entry per row")
        if n:
            limits = np.array([c.cardinality for c in self.schema.columns])
            if self.rows.min() < 0 or np.any(self.rows.max(axis=0) > limits):
                raise ValidationError("encoded index outside its column's [0, cardinality] range")
        normal_only = np.isin(self.split, (Split.TRAIN, Split.VAL))
        if np.any(self.labels[normal_only] != 0):
            raise ValidationError("train and val splits must contain normal rows only")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def mask(self, split: Split) -> np.ndarray:
        return self.split == split

    def rows_for(self, split: Split) -> np.ndarray:
        return self.rows[self.mask(split)]

    def labels_for(self, split: Split) -> np.ndarray:
        return self.labels[self.mask(split)]

    def column(self, name: str, split: Split | None = None) -> np.ndarray:
        values = self.rows[:, self.schema.position(name)]
        return values if split is None else values[self.mask(split)]

    def with_split(self, split: np.ndarray) -> "EncodedTable":
        return replace(self, split=np.asarray(split, dtype=np.uint8))


def encode_column(cells: pd.Series, spec: ColumnSpec) -> np.ndarray:
    """
    Maps raw cells of one column to indices.

    Categorical values index their vocabulary position + 1 (0 when unseen).
    Numeric-binned values take the bin found by the edges, clamping to the
    lowest/highest bin when out of range; cells that do not parse as numbers
    map to the unseen slot.
    """
    if spec.kind == CATEGORICAL:
        lookup = {value: i + 1 for i, value in enumerate(spec.vocabulary)}
        return cells.map(lookup).fillna(UNSEEN).to_numpy(dtype=np.int64)

    numeric = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=np.float64)
    valid = ~np.isnan(numeric)
    encoded = np.zeros(len(cells), dtype=np.int64)
    encoded[valid] = np.searchsorted(np.asarray(spec.bin_edges), numeric[valid], side="right") + 1
    return encoded


def decode_value(spec: ColumnSpec, index: int) -> str:
    """
    Inverse of encode_column for non-reserved indices. Numeric bins decode to
    an interval label such as "[1.5, 3.0)".
    """
    if index == UNSEEN:
        return "<unseen>"
    if not 1 <= index <= spec.cardinality:
        raise ValidationError(f"column {spec.name!r}: index {index} out of range")
    if spec.kind == CATEGORICAL:
        return spec.vocabulary[index - 1]
    edges = spec.bin_edges
    low = "-inf" if index == 1 else repr(edges[index - 2])
    high = "inf" if index == spec.cardinality else repr(edges[index - 1])
    return f"[{low}, {high})"


def encode_labels(cells: pd.Series, positive_label: str) -> np.ndarray:
    distinct = set(cells.unique().tolist())
    if len(distinct) > 2:
        raise ValidationError(f"label column is not binary: {sorted(distinct)[:5]}...")
    if len(distinct) == 2 and positive_label not in distinct:
        raise ValidationError(f"label column values {sorted(distinct)} do not include {positive_label!r}")
    return (cells.to_numpy() == positive_label).astype(np.int8)


def encode_table(
    raw_table: pd.DataFrame,
    schema: DatasetSchema,
    vocab_source: str = EXISTING,
) -> EncodedTable:
    """
    Encodes a raw table into an EncodedTable. Every row starts in the test
    split; split_dataset assigns the final tags.

    raw_table: pd.DataFrame
        string cells, header containing the schema's columns and label
    schema: DatasetSchema
        columns to encode
    vocab_source: str
        FIT refits categorical vocabularies on this table, EXISTING uses the schema's
    """
    if vocab_source not in (FIT, EXISTING):
        raise ValidationError(f"vocab_source must be {FIT!r} or {EXISTING!r}")
    missing = [n for n in schema.names + [schema.label_column] if n not in raw_table.columns]
    if missing:
        raise ValidationError(f"columns missing from table header: {missing}")
    if raw_table.isna().to_numpy().any():
        raise ValidationError("row length mismatch: some rows have fewer cells than the header")

    if vocab_source == FIT:
        columns = []
        for spec in schema.columns:
            if spec.kind == CATEGORICAL:
                vocabulary = categorical_vocabulary(raw_table[spec.name])
                spec = replace(spec, vocabulary=vocabulary, cardinality=len(vocabulary))
            columns.append(spec)
        schema = schema.with_columns(columns)

    n = raw_table.shape[0]
    rows = np.zeros((n, len(schema.columns)), dtype=np.int64)
    for j, spec in enumerate(schema.columns):
        rows[:, j] = encode_column(raw_table[spec.name], spec)
        unseen = int(np.sum(rows[:, j] == UNSEEN))
        if unseen:
            logger.debug("column %s: %d cells mapped to the unseen slot", spec.name, unseen)

    labels = encode_labels(raw_table[schema.label_column], schema.positive_label)
    split = np.full(n, Split.TEST, dtype=np.uint8)
    return EncodedTable(schema=schema, rows=rows, labels=labels, split=split)
