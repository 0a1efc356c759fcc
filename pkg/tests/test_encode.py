import numpy as np
import pandas as pd
import pytest

from common.errors import EncodedFileError, ValidationError
from data.encode import FIT, UNSEEN, Split, decode_value, encode_column, encode_table
from data.schema import CATEGORICAL, NUMERIC_BINNED, ColumnSpec, infer_schema
from data.utils import dataset_stats, load_encoded, read_raw_table, save_encoded


def test_unseen_values_map_to_zero():
    spec = ColumnSpec(name="x", kind=CATEGORICAL, cardinality=2, vocabulary=("A", "B"))
    np.testing.assert_array_equal(encode_column(pd.Series(["A", "B", "C"]), spec), [1, 2, UNSEEN])


def test_fit_builds_vocabulary():
    raw = pd.DataFrame({"x": ["x", "x", "y"], "label": ["0", "0", "0"]})
    table = encode_table(raw, infer_schema(raw), vocab_source=FIT)
    assert table.schema.column("x").cardinality == 2
    np.testing.assert_array_equal(table.column("x"), [1, 1, 2])


def test_numeric_values_clamp_to_outer_bins():
    spec = ColumnSpec(name="n", kind=NUMERIC_BINNED, cardinality=3, bin_edges=(1.0, 2.0))
    encoded = encode_column(pd.Series(["-50", "1.5", "99", "oops"]), spec)
    np.testing.assert_array_equal(encoded, [1, 2, 3, UNSEEN])


def test_decode_recovers_categorical_values(raw_table):
    table = encode_table(raw_table, infer_schema(raw_table), vocab_source=FIT)
    for name in ("color", "shape"):
        spec = table.schema.column(name)
        decoded = [decode_value(spec, int(i)) for i in table.column(name)]
        assert decoded == raw_table[name].tolist()


def test_decode_numeric_bin_label():
    spec = ColumnSpec(name="n", kind=NUMERIC_BINNED, cardinality=3, bin_edges=(1.0, 2.0))
    assert decode_value(spec, 1) == "[-inf, 1.0)"
    assert decode_value(spec, 2) == "[1.0, 2.0)"
    assert decode_value(spec, 3) == "[2.0, inf)"


def test_label_column_must_be_binary(raw_table):
    bad = raw_table.copy()
    bad.loc[0, "label"] = "2"
    with pytest.raises(ValidationError, match="binary"):
        encode_table(bad, infer_schema(raw_table), vocab_source=FIT)


def test_anomalies_cannot_sit_in_train(raw_table):
    table = encode_table(raw_table, infer_schema(raw_table), vocab_source=FIT)
    with pytest.raises(ValidationError):
        table.with_split(np.full(table.n_rows, Split.TRAIN))


def test_read_raw_table_keeps_strings(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b,label\n01,,0\nx,y,1\n", encoding="utf-8")
    frame = read_raw_table(path)
    assert frame.columns.tolist() == ["a", "b", "label"]
    assert frame["a"].tolist() == ["01", "x"]
    assert frame["b"].tolist() == ["", "y"]


def test_read_raw_table_rejects_long_rows(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,label\n1,0\n1,2,3\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="row length"):
        read_raw_table(path)


def test_encoded_file_survives_reload(tmp_path, planted_table):
    path = tmp_path / "p.enc"
    save_encoded(planted_table, path)
    loaded = load_encoded(path)
    assert loaded.schema == planted_table.schema
    np.testing.assert_array_equal(loaded.rows, planted_table.rows)
    np.testing.assert_array_equal(loaded.labels, planted_table.labels)
    np.testing.assert_array_equal(loaded.split, planted_table.split)


def test_truncated_encoded_file_is_rejected(tmp_path, planted_table):
    path = tmp_path / "p.enc"
    save_encoded(planted_table, path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(EncodedFileError, match="truncated"):
        load_encoded(path)


def test_dataset_stats(raw_table):
    table = encode_table(raw_table, infer_schema(raw_table), vocab_source=FIT)
    stats = dataset_stats("toy", table)
    assert stats["size"] == 10
    assert stats["anomalies"] == 2
    assert stats["anomaly_ratio"] == pytest.approx(0.2)
    assert stats["features"] == 3
