"""Long-format (series, x, y) CSV data behind the loss-curve, AUC-gain and threshold plots."""

from pathlib import Path
from typing import Callable
import logging

import pandas as pd

from common.errors import StorageError
from evaluation.thresholds import ThresholdTable

logger = logging.getLogger(__name__)

PLOT_COLUMNS = ["series", "x", "y"]


def _frame(rows: list[tuple]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=PLOT_COLUMNS)


def loss_curve_rows(curves: dict[str, list[float]], prefix: str = "val_loss") -> pd.DataFrame:
    """One row per (candidate, epoch), epochs counted from 1."""
    rows = [(f"{prefix}:{name}", epoch, value) for name, values in curves.items() for epoch, value in enumerate(values, 1)]
    return _frame(rows)


def auc_delta_rows(deltas: dict[str, float], series: str = "auc_delta") -> pd.DataFrame:
    """AUCROC gain of the contextual model over the baseline per dataset."""
    return _frame([(series, name, delta) for name, delta in deltas.items()])


def threshold_rows(table: ThresholdTable, decode: Callable[[int], str] | None = None) -> pd.DataFrame:
    """Per-context-value threshold scatter, x being the decoded context value."""
    label = decode if decode is not None else str
    return _frame([("thresholds", label(value), h) for value, h in sorted(table.thresholds.items())])


def emit_plot_data(frames: list[pd.DataFrame], path: str | Path) -> Path:
    """
    Concatenates plot frames into one CSV. An empty list writes the header only.

    frames: list[pd.DataFrame]
        frames with the series/x/y columns
    path: str | Path
        output CSV
    """
    path = Path(path)
    frames = [f for f in frames if not f.empty]
    data = pd.concat(frames, ignore_index=True) if frames else _frame([])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        data.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise StorageError(f"cannot write plot data {path}: {e}") from e
    logger.debug("wrote %d plot rows to %s", len(data), path)
    return path
