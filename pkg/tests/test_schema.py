import numpy as np
import pytest

from mmfc import (
    Dataset,
    DataValidationError,
    VariableSchema,
    load_dataset,
    load_schema,
    partition,
    write_dataset,
    write_schema,
)

from conftest import mixed_schemas


def test_load_dataset_marks_na_cells(tmp_path):
    schemas = [VariableSchema("a", "ordinal", 4, "focus"), VariableSchema("b", "nominal", 3, "remainder")]
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,2\nNA,3\n4,\n")
    data = load_dataset(path, schemas)
    assert data.n == 3
    assert data.mask.sum() == 2
    assert data.mask[1, data.column_index("a")]
    assert data.mask[2, data.column_index("b")]


def test_load_dataset_fully_observed(tmp_path):
    schemas = [VariableSchema("a", "ordinal", 4, "focus"), VariableSchema("b", "nominal", 3, "remainder")]
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,2\n2,3\n")
    data = load_dataset(path, schemas)
    assert data.n == 2 and not data.mask.any()


def test_load_dataset_out_of_range_reports_position(tmp_path):
    schemas = [VariableSchema("a", "ordinal", 4, "focus"), VariableSchema("b", "nominal", 3, "remainder")]
    path = tmp_path / "d.csv"
    path.write_text("a,b\n1,2\n5,1\n")
    with pytest.raises(DataValidationError, match="row 2.*'a'.*5"):
        load_dataset(path, schemas)


def test_load_dataset_rejects_unknown_column(tmp_path):
    schemas = [VariableSchema("a", "ordinal", 4, "focus"), VariableSchema("xb", "nominal", 3, "focus")]
    path = tmp_path / "d.csv"
    path.write_text("a,zzz\n1,2\n")
    with pytest.raises(DataValidationError, match="zzz"):
        load_dataset(path, schemas)


def test_load_dataset_rejects_non_integer(tmp_path):
    schemas = [VariableSchema("a", "ordinal", 4, "focus"), VariableSchema("xb", "nominal", 3, "focus")]
    path = tmp_path / "d.csv"
    path.write_text("a,xb\n1,x\n")
    with pytest.raises(DataValidationError, match="non-integer"):
        load_dataset(path, schemas)


def test_round_trip_preserves_cells(tmp_path):
    schemas = mixed_schemas()
    rng = np.random.default_rng(5)
    values = np.column_stack([rng.integers(1, s.levels + 1, 20) for s in schemas])
    mask = rng.random(values.shape) < 0.3
    data = Dataset(schemas, values, mask)
    p1 = tmp_path / "one.csv"
    write_dataset(data, p1)
    again = load_dataset(p1, schemas)
    assert np.array_equal(again.mask, data.mask)
    assert np.array_equal(again.values[~again.mask], data.values[~data.mask])
    p2 = tmp_path / "two.csv"
    write_dataset(again, p2)
    assert p1.read_text() == p2.read_text()


def test_canonical_order_on_load(tmp_path):
    schemas = [
        VariableSchema("b1", "ordinal", 3, "remainder"),
        VariableSchema("xa", "nominal", 3, "focus"),
        VariableSchema("y1", "ordinal", 3, "focus"),
    ]
    path = tmp_path / "d.csv"
    path.write_text("b1,xa,y1\n1,2,3\n")
    data = load_dataset(path, schemas)
    assert data.names == ["y1", "xa", "b1"]
    assert list(data.values[0]) == [3, 2, 1]


def test_partition_counts_paper_scale():
    # few-focus layout: 2 ordinal focus, 2 nominal focus, 8 remainder
    schemas = (
        [VariableSchema(f"y{i}", "ordinal", 4, "focus") for i in range(2)]
        + [VariableSchema(f"x{i}", "nominal", 3, "focus") for i in range(2)]
        + [VariableSchema(f"b{i}", "nominal", 3, "remainder") for i in range(8)]
    )
    view = partition(schemas)
    assert view.n_ordinal_focus == 2
    assert view.n_focus == 4
    assert len(view.remainder) == 8
    assert view.n_focus + len(view.remainder) == 12


def test_partition_allows_empty_remainder():
    schemas = [
        VariableSchema("y1", "ordinal", 3, "focus"),
        VariableSchema("x1", "nominal", 3, "focus"),
    ]
    view = partition(schemas)
    assert len(view.remainder) == 0


def test_partition_rejects_remainder_only():
    schemas = [VariableSchema("b1", "nominal", 3, "remainder")]
    with pytest.raises(DataValidationError):
        partition(schemas)


def test_partition_sets_are_disjoint_and_cover():
    schemas = mixed_schemas()
    view = partition(schemas)
    all_idx = np.concatenate([view.ordinal_focus, view.nominal_focus, view.remainder])
    assert sorted(all_idx) == list(range(len(schemas)))
    assert len(set(all_idx)) == len(schemas)


def test_schema_json_round_trip(tmp_path):
    schemas = mixed_schemas()
    path = tmp_path / "schema.json"
    write_schema(schemas, path)
    again = load_schema(path)
    assert again == schemas


def test_schema_rejects_single_level():
    with pytest.raises(DataValidationError):
        VariableSchema("a", "ordinal", 1, "focus")


def test_dataset_rejects_out_of_range_observed():
    schemas = [VariableSchema("a", "ordinal", 3, "focus")]
    with pytest.raises(DataValidationError, match="row 2"):
        Dataset(schemas, np.array([[1], [4]]), None)


def test_masked_cells_never_read_as_data():
    schemas = [VariableSchema("a", "ordinal", 3, "focus")]
    data = Dataset(schemas, np.array([[1], [999]]), np.array([[False], [True]]))
    assert data.values[1, 0] == 0  # sentinel, regardless of the input junk
