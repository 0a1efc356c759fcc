import math

import numpy as np
import pandas as pd
import pytest

from common.errors import ValidationError
from data.encode import FIT, Split, encode_table
from data.schema import infer_schema
from data.splits import context_distribution, split_dataset


def _table(labels):
    raw = pd.DataFrame({"c": [f"v{i % 3}" for i in range(len(labels))], "label": labels})
    return encode_table(raw, infer_schema(raw), vocab_source=FIT)


def test_split_sizes_follow_fractions():
    table = split_dataset(_table(["0"] * 10 + ["1"] * 2), 0.2, 0.2, seed=1)
    assert int(np.sum(table.split == Split.TRAIN)) == 6
    assert int(np.sum(table.split == Split.VAL)) == 2
    assert int(np.sum(table.split == Split.TEST)) == 4
    assert int(table.labels[table.split == Split.TEST].sum()) == 2


def test_split_is_seed_deterministic():
    base = _table(["0"] * 30 + ["1"] * 3)
    a = split_dataset(base, seed=5)
    b = split_dataset(base, seed=5)
    np.testing.assert_array_equal(a.split, b.split)


def test_all_anomalous_is_rejected():
    with pytest.raises(ValidationError, match="zero normal"):
        split_dataset(_table(["1"] * 4))


def test_context_distribution_add_one():
    raw = pd.DataFrame({"c": ["a", "a", "a", "b"], "label": ["0"] * 4})
    table = encode_table(raw, infer_schema(raw), vocab_source=FIT)
    table = table.with_split(np.full(4, Split.TRAIN))
    dist = context_distribution(table, "c")
    assert dist.probability(1) == pytest.approx(4 / 7)
    assert dist.probability(2) == pytest.approx(2 / 7)
    assert dist.probability(0) == pytest.approx(1 / 7)


def test_context_distribution_sums_to_one(planted_table):
    dist = context_distribution(planted_table, "noise_1")
    assert math.isclose(dist.probabilities.sum(), 1.0, abs_tol=1e-12)
    assert np.all(dist.probabilities > 0)


def test_context_distribution_unknown_column(planted_table):
    with pytest.raises(ValidationError):
        context_distribution(planted_table, "nope")
