from pathlib import Path
import json
import logging
import struct

import numpy as np
import pandas as pd

from common.errors import EncodedFileError, StorageError, ValidationError
from data.encode import EncodedTable
from data.schema import DatasetSchema

logger = logging.getLogger(__name__)

ENCODED_MAGIC = b"CTXENC"
ENCODED_VERSION = 1


def read_raw_table(path: str | Path) -> pd.DataFrame:
    """
    Reads a UTF-8, comma-delimited CSV whose first line holds the column names.
    Every cell stays a string; empty cells are the empty string.

    path: str | Path
        CSV location
    """
    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            encoding="utf-8",
        )
    except FileNotFoundError as e:
        raise StorageError(f"CSV not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise ValidationError(f"CSV {path} is empty") from e
    except pd.errors.ParserError as e:
        raise ValidationError(f"row length mismatch in {path}: {e}") from e

    header = frame.iloc[0].tolist()
    body = frame.iloc[1:].reset_index(drop=True)
    body.columns = header
    # Short rows are padded by the parser; na_filter=False leaves them as NaN.
    if body.isna().to_numpy().any():
        raise ValidationError(f"row length mismatch in {path}: short rows present")
    logger.debug("read %d rows x %d columns from %s", body.shape[0], body.shape[1], path)
    return body


def _write_block(handle, payload: bytes) -> None:
    handle.write(struct.pack("<Q", len(payload)))
    handle.write(payload)


def _read_exact(handle, size: int, what: str) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise EncodedFileError(f"encoded file is truncated while reading {what}")
    return data


def save_encoded(table: EncodedTable, path: str | Path) -> None:
    """
    Persists an EncodedTable.

    Layout: magic, uint16 version, uint64-prefixed JSON header (schema with
    vocabularies, row and column counts), then the row-major little-endian
    int32 index matrix, uint8 labels and uint8 split tags.

    table: EncodedTable
        table to persist
    path: str | Path
        output file location
    """
    path = Path(path)
    n, d = table.rows.shape
    header = {"schema": table.schema.to_dict(), "n_rows": n, "n_columns": d}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            handle.write(ENCODED_MAGIC)
            handle.write(struct.pack("<H", ENCODED_VERSION))
            _write_block(handle, header_bytes)
            handle.write(np.ascontiguousarray(table.rows, dtype="<i4").tobytes())
            handle.write(np.ascontiguousarray(table.labels, dtype="u1").tobytes())
            handle.write(np.ascontiguousarray(table.split, dtype="u1").tobytes())
    except OSError as e:
        raise StorageError(f"cannot write encoded dataset {path}: {e}") from e
    logger.info("encoded dataset saved to %s", path)


def load_encoded(path: str | Path) -> EncodedTable:
    """
    Reads a file written by save_encoded.

    path: str | Path
        encoded dataset location
    """
    path = Path(path)
    try:
        handle = open(path, "rb")
    except OSError as e:
        raise StorageError(f"cannot read encoded dataset {path}: {e}") from e
    with handle:
        if _read_exact(handle, len(ENCODED_MAGIC), "magic") != ENCODED_MAGIC:
            raise EncodedFileError(f"{path} is not an encoded dataset")
        (version,) = struct.unpack("<H", _read_exact(handle, 2, "version"))
        if version != ENCODED_VERSION:
            raise EncodedFileError(f"{path}: format version {version}, expected {ENCODED_VERSION}")
        (size,) = struct.unpack("<Q", _read_exact(handle, 8, "header size"))
        try:
            header = json.loads(_read_exact(handle, size, "header").decode("utf-8"))
            schema = DatasetSchema.from_dict(header["schema"])
            n, d = int(header["n_rows"]), int(header["n_columns"])
        except (ValueError, KeyError) as e:
            raise EncodedFileError(f"{path}: corrupt header: {e}") from e
        rows = np.frombuffer(_read_exact(handle, 4 * n * d, "rows"), dtype="<i4").reshape(n, d)
        labels = np.frombuffer(_read_exact(handle, n, "labels"), dtype="u1")
        split = np.frombuffer(_read_exact(handle, n, "split"), dtype="u1")
        if handle.read(1):
            raise EncodedFileError(f"{path}: trailing bytes after split tags")
    return EncodedTable(
        schema=schema,
        rows=rows.astype(np.int64),
        labels=labels.astype(np.int8),
        split=split.astype(np.uint8),
    )


def dataset_stats(name: str, table: EncodedTable) -> dict:
    """
    Descriptive statistics in the shape of a dataset overview table.

    name: str
        dataset name
    table: EncodedTable
        encoded dataset
    """
    n = table.n_rows
    anomalies = int(table.labels.sum())
    cardinalities = [c.cardinality for c in table.schema.columns]
    return {
        "dataset": name,
        "features": len(cardinalities),
        "size": n,
        "anomalies": anomalies,
        "anomaly_ratio": anomalies / n if n else 0.0,
        "avg_cardinality": float(np.mean(cardinalities)),
    }


def format_stats(stats: dict) -> str:
    return (
        f"{stats['dataset']}: size {stats['size']:,}, features {stats['features']}, "
        f"anomalies {stats['anomalies']:,} ({stats['anomaly_ratio']:.2%}), "
        f"avg cardinality {stats['avg_cardinality']:.2f}"
    )
