"""
Synthetic tables with known context structure.

planted_context_frame builds data where one column (the planted context)
decides which mode every content column sits at, plus noise columns that carry
nothing. Anomalies keep their own context value but copy the content profile
of a different context, so they only look odd once the context is known.
independent_frame builds columns with no relation to each other.
"""

import numpy as np
import pandas as pd

PLANTED_COLUMN = "region"
LABEL_COLUMN = "is_anomaly"


def _content_profile(rng: np.random.Generator, n_contexts: int, n_content: int, content_cardinality: int) -> np.ndarray:
    """(n_contexts, n_content) mode table whose rows are pairwise distinct in every column."""
    profile = np.zeros((n_contexts, n_content), dtype=np.int64)
    for j in range(n_content):
        profile[:, j] = rng.choice(content_cardinality, size=n_contexts, replace=False)
    return profile


def _draw_content(
    rng: np.random.Generator,
    modes: np.ndarray,
    content_cardinality: int,
    mode_probability: float,
) -> np.ndarray:
    """Each cell keeps its mode with `mode_probability`, else takes any other value uniformly."""
    n, m = modes.shape
    keep = rng.random((n, m)) < mode_probability
    offsets = rng.integers(1, content_cardinality, size=(n, m))
    return np.where(keep, modes, (modes + offsets) % content_cardinality)


def planted_context_frame(
    n_rows: int = 2000,
    seed: int = 0,
    n_contexts: int = 5,
    n_noise: int = 3,
    n_content: int = 6,
    content_cardinality: int = 12,
    noise_cardinality: int = 5,
    mode_probability: float = 0.9,
    anomaly_rate: float = 0.0,
) -> pd.DataFrame:
    """
    Returns a string-typed table with a planted context column.

    n_rows: int
        number of rows, anomalies included
    n_contexts: int
        distinct values of the planted column
    n_noise: int
        independent uniform distractor columns
    n_content: int
        columns whose mode depends on the planted column
    mode_probability: float
        chance that a content cell sits at its context's mode
    anomaly_rate: float
        share of rows drawn from another context's content profile
    """
    if content_cardinality < n_contexts:
        raise ValueError("content_cardinality must be >= n_contexts so every context gets its own mode")
    rng = np.random.default_rng(seed)
    profile = _content_profile(rng, n_contexts, n_content, content_cardinality)

    context = rng.integers(0, n_contexts, size=n_rows)
    labels = (rng.random(n_rows) < anomaly_rate).astype(np.int64)
    shift = rng.integers(1, n_contexts, size=n_rows)
    source = np.where(labels == 1, (context + shift) % n_contexts, context)
    content = _draw_content(rng, profile[source], content_cardinality, mode_probability)
    noise = rng.integers(0, noise_cardinality, size=(n_rows, n_noise))

    frame = {PLANTED_COLUMN: [f"r{v}" for v in context]}
    for j in range(n_noise):
        frame[f"noise_{j}"] = [f"n{v}" for v in noise[:, j]]
    for j in range(n_content):
        frame[f"f{j}"] = [f"v{v}" for v in content[:, j]]
    frame[LABEL_COLUMN] = [str(v) for v in labels]
    return pd.DataFrame(frame)


def planted_candidates(n_noise: int = 3) -> list[str]:
    return [PLANTED_COLUMN] + [f"noise_{j}" for j in range(n_noise)]


def independent_frame(
    n_rows: int = 2000,
    seed: int = 0,
    n_columns: int = 4,
    cardinality: int = 5,
) -> pd.DataFrame:
    """String-typed table of mutually independent uniform columns x0..x{n-1}, all normal."""
    rng = np.random.default_rng(seed)
    values = rng.integers(0, cardinality, size=(n_rows, n_columns))
    frame = {f"x{j}": [f"c{v}" for v in values[:, j]] for j in range(n_columns)}
    frame[LABEL_COLUMN] = ["0"] * n_rows
    return pd.DataFrame(frame)
