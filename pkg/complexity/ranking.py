from pathlib import Path
import logging

import pandas as pd

from common.errors import StorageError, ValidationError
from complexity.metrics import METRICS

logger = logging.getLogger(__name__)


def scale_and_rank(raw_scores: pd.DataFrame) -> pd.DataFrame:
    """
    Min-max scales every metric across datasets, ranks datasets per metric and
    overall by the mean scaled score.

    Ranks are competition ranks, 1 for the highest value, ties sharing the
    smaller rank. A metric constant across datasets scales to 0. Missing raw
    values stay missing and avg_scaled averages the metrics that are present.

    raw_scores: pd.DataFrame
        index = dataset name, columns = k_vcc, k_het, k_ins, k_fnl
    """
    missing = [m for m in METRICS if m not in raw_scores.columns]
    if missing:
        raise ValidationError(f"raw scores lack metric column(s) {missing}")
    if raw_scores.shape[0] < 2:
        raise ValidationError("scaling needs at least 2 datasets")

    raw = raw_scores[list(METRICS)].astype(float)
    low, high = raw.min(), raw.max()
    spread = high - low
    scaled = (raw - low) / spread.where(spread > 0)
    for m in spread.index[spread == 0]:
        scaled.loc[raw[m].notna(), m] = 0.0
    ranks = raw.rank(method="min", ascending=False).astype("Int64")

    report = pd.DataFrame(index=raw.index)
    for m in METRICS:
        report[f"{m}_raw"] = raw[m]
        report[f"{m}_scaled"] = scaled[m]
        report[f"{m}_rank"] = ranks[m]
    report["avg_scaled"] = scaled.mean(axis=1, skipna=True)
    report["rank"] = report["avg_scaled"].rank(method="min", ascending=False).astype("Int64")
    report.index.name = "dataset"
    return report


def read_raw_scores(path: str | Path) -> pd.DataFrame:
    """Reads a dataset,k_vcc,k_het,k_ins,k_fnl CSV, eg. published scores to re-rank."""
    try:
        frame = pd.read_csv(path)
    except OSError as e:
        raise StorageError(f"cannot read raw scores {path}: {e}") from e
    if "dataset" not in frame.columns:
        raise ValidationError(f"{path}: raw scores need a 'dataset' column")
    return frame.set_index("dataset")


def write_complexity_csv(report: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        report.to_csv(path, lineterminator="\n", float_format="%.6f")
    except OSError as e:
        raise StorageError(f"cannot write complexity report {path}: {e}") from e
    logger.info("complexity report written to %s", path)
    return path
