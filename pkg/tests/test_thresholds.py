import numpy as np
import pytest

from common.errors import ValidationError
from evaluation.thresholds import THRESHOLD_FLOOR, contextual_ratios, fit_thresholds
from selection.context import NO_CONTEXT


def test_group_max_thresholds():
    table = fit_thresholds(np.array([0.2, 0.5, 1.0]), np.array([1, 1, 2]), "c")
    assert table.thresholds == {1: 0.5, 2: 1.0}
    assert table.global_fallback == 1.0
    assert table.context_column == "c"


def test_no_context_uses_global_max():
    table = fit_thresholds(np.array([0.3, 0.9, 0.1]))
    assert table.context_column == NO_CONTEXT
    assert table.thresholds == {}
    np.testing.assert_array_equal(table.lookup(None, 2), [0.9, 0.9])


def test_singleton_group_threshold_is_its_score():
    table = fit_thresholds(np.array([0.4, 2.0]), np.array([3, 5]), "c")
    assert table.thresholds[3] == 0.4


def test_empty_scores_are_rejected():
    with pytest.raises(ValidationError):
        fit_thresholds(np.array([]))


def test_zero_scores_are_floored():
    table = fit_thresholds(np.zeros(3), np.array([1, 1, 2]), "c")
    assert all(h == THRESHOLD_FLOOR for h in table.thresholds.values())


def test_ratio_and_unseen_fallback():
    table = fit_thresholds(np.array([0.2, 0.5, 1.0]), np.array([1, 1, 2]), "c")
    records = contextual_ratios(np.array([0.25, 2.0]), table, np.array([0, 1]), np.array([1, 9]))
    np.testing.assert_allclose(records.ratios, [0.5, 2.0])
    np.testing.assert_array_equal(records.row_ids, [0, 1])
    assert len(records) == 2


def test_ratios_are_scale_homogeneous():
    rng = np.random.default_rng(0)
    train, groups = rng.uniform(0.1, 3.0, 50), rng.integers(1, 4, 50)
    test, test_groups = rng.uniform(0.1, 3.0, 20), rng.integers(0, 5, 20)
    labels = np.zeros(20)
    base = contextual_ratios(test, fit_thresholds(train, groups, "c"), labels, test_groups)
    scaled = contextual_ratios(7.5 * test, fit_thresholds(7.5 * train, groups, "c"), labels, test_groups)
    np.testing.assert_allclose(base.ratios, scaled.ratios, rtol=1e-12)


def test_training_rows_never_exceed_their_threshold():
    rng = np.random.default_rng(1)
    scores, groups = rng.exponential(size=200), rng.integers(1, 8, 200)
    table = fit_thresholds(scores, groups, "c")
    records = contextual_ratios(scores, table, np.zeros(200), groups)
    assert records.ratios.max() <= 1.0
    assert table.stats()["groups"] == len(np.unique(groups))
