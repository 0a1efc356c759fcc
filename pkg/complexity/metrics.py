"""
Dataset complexity metrics over encoded categorical tables.

All value frequencies are relative frequencies counted over every row of the
table (anomalies included), per feature column.

  k_vcc  similarity among anomalies (mean per-feature match over anomaly pairs)
  k_het  spread of dominant-value frequencies across features (max / min mode frequency)
  k_ins  how often anomalies sit on values more common than those of normal rows
  k_fnl  share of features where anomalies are on average no rarer than normal rows
"""

import logging

import numpy as np

from common.errors import ValidationError
from data.encode import EncodedTable

logger = logging.getLogger(__name__)

MAX_PAIRS = 10_000
METRICS = ("k_vcc", "k_het", "k_ins", "k_fnl")


def value_frequencies(data: EncodedTable) -> np.ndarray:
    """(n, d) relative frequency of each cell's value within its column."""
    n = data.n_rows
    freqs = np.zeros(data.rows.shape, dtype=np.float64)
    for j in range(data.rows.shape[1]):
        col = data.rows[:, j]
        freqs[:, j] = np.bincount(col)[col] / n
    return freqs


def _require_anomalies(data: EncodedTable, minimum: int, metric: str) -> np.ndarray:
    anomalies = np.flatnonzero(data.labels == 1)
    if anomalies.size < minimum:
        raise ValidationError(f"{metric} needs at least {minimum} anomalies, the table has {anomalies.size}")
    return anomalies


def k_vcc(data: EncodedTable, max_pairs: int = MAX_PAIRS, seed: int = 0) -> float:
    """
    Mean Hamming similarity over anomaly pairs, sampling `max_pairs` pairs
    with `seed` when there are more.
    """
    anomalies = data.rows[_require_anomalies(data, 2, "k_vcc")]
    m = anomalies.shape[0]
    if m * (m - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(m, k=1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, m, size=max_pairs)
        j = rng.integers(0, m - 1, size=max_pairs)
        j = j + (j >= i)
    return float((anomalies[i] == anomalies[j]).mean())


def k_het(data: EncodedTable) -> float:
    if data.n_rows == 0 or data.rows.shape[1] == 0:
        raise ValidationError("k_het needs rows and features")
    modes = np.array([np.bincount(data.rows[:, j]).max() for j in range(data.rows.shape[1])], dtype=np.float64)
    modes /= data.n_rows
    return float(modes.max() / modes.min())


def k_ins(data: EncodedTable) -> float:
    """
    For every (anomaly, feature) pair, the fraction of normal rows whose value
    in that feature is strictly rarer than the anomaly's; averaged.
    """
    anomalies = _require_anomalies(data, 1, "k_ins")
    normal = data.labels == 0
    if not np.any(normal):
        raise ValidationError("k_ins needs normal rows")
    freqs = value_frequencies(data)
    fractions = np.zeros(freqs.shape[1])
    for j in range(freqs.shape[1]):
        normal_sorted = np.sort(freqs[normal, j])
        rarer = np.searchsorted(normal_sorted, freqs[anomalies, j], side="left")
        fractions[j] = rarer.mean() / normal_sorted.size
    return float(fractions.mean())


def k_fnl(data: EncodedTable) -> float:
    anomalies = _require_anomalies(data, 1, "k_fnl")
    normal = data.labels == 0
    if not np.any(normal):
        raise ValidationError("k_fnl needs normal rows")
    freqs = value_frequencies(data)
    return float(np.mean(freqs[anomalies].mean(axis=0) >= freqs[normal].mean(axis=0)))


def compute_metrics(data: EncodedTable, seed: int = 0) -> dict[str, float | None]:
    """All four metrics; one that cannot be computed is None and logged."""
    functions = {
        "k_vcc": lambda: k_vcc(data, seed=seed),
        "k_het": lambda: k_het(data),
        "k_ins": lambda: k_ins(data),
        "k_fnl": lambda: k_fnl(data),
    }
    results = {}
    for name, fn in functions.items():
        try:
            results[name] = fn()
        except ValidationError as e:
            logger.warning("%s skipped: %s", name, e.message)
            results[name] = None
    return results
