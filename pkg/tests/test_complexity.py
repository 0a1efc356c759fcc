from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from common.errors import ValidationError
from complexity.metrics import METRICS, compute_metrics, k_fnl, k_het, k_ins, k_vcc, value_frequencies
from complexity.ranking import read_raw_scores, scale_and_rank, write_complexity_csv
from data.encode import FIT, encode_table
from data.schema import infer_schema

# published raw scores with their scaled values, per-metric ranks, average and overall rank
PUBLISHED = pd.DataFrame(
    [
        ["bank", 0.210, 2.015, 0.343, 1.000, 0.196, 0.016, 0.775, 1.000, 5, 4, 3, 1, 0.497, 2],
        ["beth", 0.916, 2.929, 0.016, 0.179, 1.000, 0.037, 0.032, 0.179, 1, 3, 7, 5, 0.312, 4],
        ["census", 0.450, 3.500, 0.238, 0.286, 0.469, 0.049, 0.536, 0.286, 3, 2, 4, 4, 0.335, 3],
        ["cmc", 0.038, 1.579, 0.348, 0.000, 0.000, 0.007, 0.786, 0.000, 8, 6, 2, 8, 0.198, 7],
        ["kdd", 0.055, 1.278, 0.159, 0.500, 0.019, 0.000, 0.357, 0.500, 7, 8, 6, 2, 0.219, 6],
        ["lanl", 0.369, 1.939, 0.002, 0.009, 0.377, 0.015, 0.000, 0.009, 4, 5, 8, 7, 0.100, 8],
        ["sf", 0.124, 1.564, 0.176, 0.500, 0.098, 0.006, 0.395, 0.500, 6, 7, 5, 2, 0.250, 5],
        ["spotify", 0.500, 46.264, 0.442, 0.123, 0.526, 1.000, 1.000, 0.123, 2, 1, 1, 6, 0.662, 1],
    ],
    columns=["dataset", *METRICS]
    + [f"{m}_scaled" for m in METRICS]
    + [f"{m}_rank" for m in METRICS]
    + ["avg_scaled", "rank"],
).set_index("dataset")


def _table(columns: dict, labels: list[int]):
    raw = pd.DataFrame({**columns, "label": [str(v) for v in labels]})
    return encode_table(raw, infer_schema(raw), vocab_source=FIT)


def test_k_vcc_identical_and_disjoint_anomalies():
    same = _table({"f1": ["a", "a", "z"], "f2": ["b", "b", "z"]}, [1, 1, 0])
    different = _table({"f1": ["a", "b", "z"], "f2": ["c", "d", "z"]}, [1, 1, 0])
    assert k_vcc(same) == 1.0
    assert k_vcc(different) == 0.0


def test_k_vcc_three_anomalies():
    table = _table({"f1": ["a", "a", "b"], "f2": ["a", "b", "b"]}, [1, 1, 1])
    assert k_vcc(table) == pytest.approx(1 / 3)


def test_k_vcc_sampling_is_seeded():
    rng = np.random.default_rng(0)
    table = _table({"f1": [f"v{v}" for v in rng.integers(0, 3, 200)]}, [1] * 200)
    assert k_vcc(table, max_pairs=500, seed=1) == k_vcc(table, max_pairs=500, seed=1)
    assert k_vcc(table, max_pairs=500, seed=1) == pytest.approx(k_vcc(table), abs=0.1)


def test_k_vcc_needs_two_anomalies():
    with pytest.raises(ValidationError):
        k_vcc(_table({"f1": ["a", "b"]}, [1, 0]))


def test_k_het_ratio_of_mode_frequencies():
    f1 = ["x"] * 9 + ["y"]
    f2 = ["a", "a", "a", "b", "b", "b", "c", "c", "c", "d"]
    assert k_het(_table({"f1": f1, "f2": f2}, [0] * 10)) == pytest.approx(3.0)
    assert k_het(_table({"f1": f1}, [0] * 10)) == 1.0
    assert k_het(_table({"f1": f2, "f2": f2[::-1]}, [0] * 10)) == pytest.approx(1.0)


def test_k_ins_counts_strictly_rarer_normals():
    table = _table({"f1": ["a", "a", "a", "b", "c"]}, [1, 0, 0, 0, 0])
    np.testing.assert_allclose(value_frequencies(table)[:, 0], [0.6, 0.6, 0.6, 0.2, 0.2])
    assert k_ins(table) == pytest.approx(0.5)


def test_k_ins_extremes():
    rare = _table({"f1": ["r", "a", "a", "b", "b"]}, [1, 0, 0, 0, 0])
    common = _table({"f1": ["a", "a", "a", "b", "c"], "f2": ["m", "m", "m", "n", "o"]}, [1, 1, 0, 0, 0])
    assert k_ins(rare) == 0.0
    assert k_ins(common) == pytest.approx(2 / 3)


def test_k_fnl():
    modes = _table({"f1": ["a", "a", "a", "b"], "f2": ["c", "c", "c", "d"]}, [1, 0, 0, 0])
    singletons = _table({"f1": ["u"] + ["a"] * 20, "f2": ["w"] + ["b"] * 20}, [1] + [0] * 20)
    mixed = _table({"f1": ["a", "a", "a", "b"], "f2": ["d", "c", "c", "c"]}, [1, 0, 0, 0])
    assert k_fnl(modes) == 1.0
    assert k_fnl(singletons) == 0.0
    assert k_fnl(mixed) == 0.5


def test_metrics_ignore_row_order(planted_table):
    order = np.random.default_rng(0).permutation(planted_table.n_rows)
    shuffled = replace(
        planted_table, rows=planted_table.rows[order], labels=planted_table.labels[order], split=planted_table.split[order]
    )
    first, second = compute_metrics(planted_table), compute_metrics(shuffled)
    for m in ("k_het", "k_ins", "k_fnl"):
        assert first[m] == pytest.approx(second[m], abs=1e-12)
    assert 0 <= first["k_vcc"] <= 1
    assert first["k_het"] >= 1


def test_missing_metric_is_none(small_table):
    metrics = compute_metrics(small_table)
    assert metrics["k_vcc"] is None and metrics["k_ins"] is None
    assert metrics["k_het"] >= 1


def test_published_scaling_and_ranks():
    report = scale_and_rank(PUBLISHED[list(METRICS)])
    for m in METRICS:
        np.testing.assert_allclose(report[f"{m}_scaled"], PUBLISHED[f"{m}_scaled"], atol=1e-3)
        assert report[f"{m}_rank"].tolist() == PUBLISHED[f"{m}_rank"].tolist()
    np.testing.assert_allclose(report["avg_scaled"], PUBLISHED["avg_scaled"], atol=1e-3)
    assert report["rank"].tolist() == PUBLISHED["rank"].tolist()
    assert report.loc["kdd", "k_fnl_rank"] == report.loc["sf", "k_fnl_rank"] == 2


def test_constant_metric_scales_to_zero():
    raw = pd.DataFrame({m: [0.5, 0.5, 0.5] for m in METRICS}, index=["a", "b", "c"])
    report = scale_and_rank(raw)
    for m in METRICS:
        assert report[f"{m}_scaled"].tolist() == [0.0, 0.0, 0.0]
        assert report[f"{m}_rank"].tolist() == [1, 1, 1]
    assert report["rank"].tolist() == [1, 1, 1]


def test_single_dataset_is_rejected():
    with pytest.raises(ValidationError):
        scale_and_rank(PUBLISHED[list(METRICS)].iloc[:1])


def test_raw_scores_csv_round_trip(tmp_path):
    path = tmp_path / "raw.csv"
    PUBLISHED[list(METRICS)].to_csv(path)
    report = scale_and_rank(read_raw_scores(path))
    out = write_complexity_csv(report, tmp_path / "complexity.csv")
    header = out.read_text().splitlines()[0].split(",")
    assert header[0] == "dataset"
    assert header[-2:] == ["avg_scaled", "rank"]
    assert report.loc["spotify", "rank"] == 1
