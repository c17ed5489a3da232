import json
from importlib import resources

import numpy as np
import pytest

from mmfc.cli import main
from mmfc.schema import load_dataset, load_schema, write_dataset, write_schema

from conftest import mixed_schemas, random_dataset


@pytest.fixture
def example_paths():
    base = resources.files("mmfc.data")
    return str(base / "example_schema.json"), str(base / "example_data.csv")


@pytest.fixture
def small_inputs(tmp_path):
    schemas = mixed_schemas()
    data = random_dataset(schemas, 30, seed=8, missing_rate=0.2)
    schema_path = tmp_path / "schema.json"
    data_path = tmp_path / "data.csv"
    write_schema(schemas, schema_path)
    write_dataset(data, data_path)
    return str(schema_path), str(data_path)


def test_validate_bundled_example_exits_zero(example_paths, capsys):
    schema_path, data_path = example_paths
    assert main(["validate", "--schema", schema_path, "--data", data_path]) == 0
    out = capsys.readouterr().out
    assert "schema" in out and "data" in out


def test_validate_bad_schema_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps([{"name": "a", "kind": "ordinal", "levels": 1, "group": "focus"}]))
    assert main(["validate", "--schema", str(bad)]) == 1
    err = capsys.readouterr().err.strip()
    parsed = json.loads(err)
    assert parsed["error"] == "validation"


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_impute_writes_deterministic_outputs(small_inputs, tmp_path):
    schema_path, data_path = small_inputs
    args = [
        "impute", "--schema", schema_path, "--data", data_path,
        "--seed", "5", "--m", "2", "--burn-in", "3", "--thin", "2",
    ]
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    for k in (1, 2):
        b1 = (out1 / f"imp_{k}.csv").read_bytes()
        b2 = (out2 / f"imp_{k}.csv").read_bytes()
        assert b1 == b2
    assert (out1 / "manifest.json").exists()
    diag = json.loads((out1 / "diagnostics.json").read_text())
    assert diag["seed"] == 5
    assert len(diag["traces"]["alpha_top"]) == 3 + 2 * 2


def test_imputed_files_are_complete_and_loadable(small_inputs, tmp_path):
    schema_path, data_path = small_inputs
    out = tmp_path / "out"
    assert main([
        "impute", "--schema", schema_path, "--data", data_path,
        "--out", str(out), "--seed", "5", "--m", "2", "--burn-in", "2", "--thin", "1",
    ]) == 0
    schemas = load_schema(schema_path)
    for k in (1, 2):
        d = load_dataset(out / f"imp_{k}.csv", schemas)
        assert d.is_complete()
        original = load_dataset(data_path, schemas)
        obs = ~original.mask
        assert np.array_equal(d.values[obs], original.values[obs])


def test_pool_over_imputation_directory(small_inputs, tmp_path):
    schema_path, data_path = small_inputs
    imp_dir = tmp_path / "imps"
    assert main([
        "impute", "--schema", schema_path, "--data", data_path,
        "--out", str(imp_dir), "--seed", "9", "--m", "3", "--burn-in", "2", "--thin", "1",
    ]) == 0
    out = tmp_path / "pooled"
    assert main([
        "pool", "--schema", schema_path, "--data", str(imp_dir),
        "--out", str(out), "--seed", "9",
    ]) == 0
    lines = (out / "pooled_estimates.csv").read_text().splitlines()
    assert lines[0] == "cell,q_bar,t_m,nu_m,lower,upper"
    assert len(lines) > 10


def test_ppc_command_outputs(small_inputs, tmp_path):
    schema_path, data_path = small_inputs
    out = tmp_path / "ppc"
    assert main([
        "ppc", "--schema", schema_path, "--data", data_path,
        "--out", str(out), "--seed", "3", "--m", "2", "--burn-in", "3", "--thin", "2",
        "--replicates", "4",
    ]) == 0
    report = json.loads((out / "ppc.json").read_text())
    assert report["replicate_count"] == 4
    assert (out / "replicate_statistics.csv").exists()
    ivo = json.loads((out / "imputed_vs_observed.json").read_text())
    assert set(ivo) == {s.name for s in mixed_schemas()}


def test_simulate_tiny_smoke(tmp_path):
    out = tmp_path / "study"
    code = main([
        "simulate", "--out", str(out), "--seed", "4", "--scenario", "high-few-small",
        "--reps", "1", "--m", "2", "--burn-in", "5", "--thin", "2",
        "--oracle-draws", "20000", "--models", "mmfc",
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert "high-few-small" in report["scenarios"]
    assert (out / "estimands.csv").exists()
    assert (out / "runs" / "high-few-small__rep0__mmfc.json").exists()


def test_missing_required_flag_exits_nonzero(capsys):
    with pytest.raises(SystemExit):
        main(["impute", "--seed", "1"])
