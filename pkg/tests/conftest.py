import numpy as np
import pandas as pd
import pytest

from data.encode import FIT, encode_table
from data.schema import infer_schema
from data.splits import split_dataset
from data.synthetic import LABEL_COLUMN, planted_candidates, planted_context_frame


@pytest.fixture
def raw_table() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "color": ["red", "blue", "red", "green", "blue", "red", "green", "red", "blue", "red"],
            "shape": ["sq", "sq", "ci", "ci", "tr", "sq", "tr", "ci", "sq", "sq"],
            "size": ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"],
            "label": ["0", "0", "0", "0", "0", "0", "0", "0", "1", "1"],
        }
    )


@pytest.fixture
def planted_table():
    """Encoded and split planted-context data with a few contextual anomalies."""
    raw = planted_context_frame(n_rows=400, seed=3, anomaly_rate=0.05)
    schema = infer_schema(raw, label_column=LABEL_COLUMN, candidate_context_columns=planted_candidates())
    return split_dataset(encode_table(raw, schema, vocab_source=FIT), seed=0)


@pytest.fixture
def small_table():
    """20+ rows of tiny categorical data for gradient checks."""
    rng = np.random.default_rng(7)
    raw = pd.DataFrame(
        {
            "a": [f"a{v}" for v in rng.integers(0, 3, 40)],
            "b": [f"b{v}" for v in rng.integers(0, 4, 40)],
            "c": [f"c{v}" for v in rng.integers(0, 2, 40)],
            "label": ["0"] * 40,
        }
    )
    schema = infer_schema(raw)
    return split_dataset(encode_table(raw, schema, vocab_source=FIT), seed=0)
