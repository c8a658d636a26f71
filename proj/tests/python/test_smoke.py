import json
import math
import pathlib

import jsonschema
import pytest

import frcap

SCHEMAS = pathlib.Path(__file__).resolve().parents[2] / "schemas"


def test_published_schemas_match_the_embedded_ones():
    for name, embedded in (("config", frcap.config_schema()), ("network", frcap.network_schema())):
        on_disk = json.loads((SCHEMAS / f"{name}.schema.json").read_text())
        jsonschema.Draft7Validator.check_schema(on_disk)
        assert on_disk == embedded


@pytest.mark.parametrize("experiment", frcap.experiments())
def test_merged_configs_validate(experiment):
    doc = frcap.merged_config(experiment, overrides=["seed=3"])
    jsonschema.validate(doc, frcap.config_schema())
    assert doc["experiment"] == experiment
    assert doc["seed"] == 3


def test_invalid_config_raises_value_error():
    with pytest.raises(ValueError):
        frcap.merged_config("train", {"schema": 1, "train": {"lr": -1}})
    with pytest.raises(frcap.ValidationError):
        frcap.merged_config("train", overrides=["network.activation=tanh"])


def test_network_json_validates_and_predicts():
    net = frcap.init_network([2, 5, 1], "relu", seed=4)
    jsonschema.validate(net, frcap.network_schema())
    w0 = net["weights"][0]
    x = [0.3, -1.2]
    # Layers are flattened column-major: entry (i, j) sits at j * rows + i.
    rows, cols = net["dims"][0], net["dims"][1]
    hidden = [max(0.0, sum(x[i] * w0[j * rows + i] for i in range(rows))) for j in range(cols)]
    w1 = net["weights"][1]
    want = sum(hidden[j] * w1[j] for j in range(cols))
    assert frcap.predict(net, x)[0] == pytest.approx(want, rel=1e-12)


def test_norm_report_fr_identity():
    net = frcap.init_network([3, 4, 4, 1], "relu", seed=1)
    xs = [[math.sin(i + k) for k in range(3)] for i in range(20)]
    ys = [math.cos(i) for i in range(20)]
    rep = frcap.norm_report(net, xs, ys, loss="squared", norms=["spectral", "path:2"])
    assert rep["fr_identity"] == pytest.approx(rep["fr_fisher"], rel=1e-8)
    verdicts = [c["verdict"] for c in rep["comparisons"]]
    assert verdicts and all(verdicts)


def test_rademacher_under_bound():
    est = frcap.linear_fr_rademacher(200, 1.0, 5, 2000, seed=7, threads=2)
    assert est["mean"] <= est["bound"] + 3 * est["std_error"]


def test_verify_suites_pass():
    results = frcap.verify(["gradient_structure", "star_shape"], count=20, seed=2)
    assert [r["suite"] for r in results] == ["gradient_structure", "star_shape"]
    assert all(r["passed"] for r in results)


def test_run_experiment_writes_reports(tmp_path):
    out = tmp_path / "norms"
    rep = frcap.run_experiment("norms", {"schema": 1, "dataset": {"n": 40}}, [f"output_dir={out}"])
    assert rep["ok"]
    assert (out / "norms.json").exists()
    assert (out / "norms.csv").read_text().count("\n") == 2
