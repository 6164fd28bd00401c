import json

import pandas as pd
import pytest
from click.testing import CliRunner
from pathlib import Path
from smtalign.cli import cli
from smtalign.config import Config
from smtalign.dataset import write_records
from smtalign.domain import FEATURE_DIM, PLACEMENT_SLOTS, TARGETS
from smtalign.identifiers import ArtifactNames
from smtalign.manifest import Manifest
from smtalign.predictors import ModelBundle, TrainedModel
from smtalign.svr import SvrModel
from smtalign.util import calculate_md5, read_json

CONFIG = str(Path(__file__).parent / 'fixtures' / 'test_cli.yaml')


@pytest.fixture
def run():
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli, ["--config", CONFIG, "--log-level", "WARNING", *map(str, args)])
    return invoke


@pytest.fixture
def generated(run, tmp_path):
    out = tmp_path / "data"
    result = run("generate", "--out", out)
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture
def trained(run, generated, tmp_path):
    out = tmp_path / "models"
    result = run("train", generated / "dataset.csv", "--model", "rfr", "--out", out)
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture
def identity_models(tmp_path):
    """SVR models with F_x = chi_x, F_y = chi_y, F_theta = chi_theta, listed in a manifest."""
    config = Config.initialize(config_file=CONFIG)
    names = ArtifactNames(config)
    out = tmp_path / "identity"
    out.mkdir()
    models = {}
    for offset, target in enumerate(TARGETS):
        weight = [0.0] * FEATURE_DIM
        weight[PLACEMENT_SLOTS.start + offset] = 1.0
        models[target] = TrainedModel("svr", target, SvrModel(dual_coeffs=(), bias=0.0, weight=tuple(weight),
                                                              training_dim=FEATURE_DIM))
    manifest = Manifest(out, config)
    for filename in ModelBundle("svr", models).save(out, names):
        manifest.add_file(filename, Kind="svr")
    manifest.save()
    Config.reset()
    return out


@pytest.fixture
def contexts(make_record, tmp_path):
    path = tmp_path / "contexts.csv"
    write_records([make_record("R1005", placement=(40.0, 30.0, 0.5))], path)
    return path


def test_generate(generated):
    """Test dat generate de dataset, contexten en het manifest schrijft."""
    assert len(pd.read_csv(generated / "dataset.csv")) == 24
    assert len(pd.read_csv(generated / "contexts.csv")) == 6
    manifest = read_json(generated / "manifest.json")
    assert sorted(manifest) == ["contexts.csv", "dataset.csv", "dataset.meta.json", "generate.config.json"]
    assert manifest["dataset.csv"]["Records"] == 24
    assert read_json(generated / "dataset.meta.json")["seed"] == 11
    assert (generated / "generate_run_info.json").exists()


def test_generate_is_reproducible(run, generated, tmp_path):
    again = tmp_path / "again"
    assert run("generate", "--out", again).exit_code == 0
    for filename in ["dataset.csv", "contexts.csv", "dataset.meta.json", "generate.config.json", "manifest.json"]:
        assert calculate_md5(generated / filename) == calculate_md5(again / filename)


def test_generate_seed_option(run, generated, tmp_path):
    other = tmp_path / "other"
    assert run("generate", "--out", other, "--seed", 12, "--records-per-type", 5).exit_code == 0
    assert len(pd.read_csv(other / "dataset.csv")) == 30
    assert read_json(other / "generate.config.json")["seed"] == 12


def test_train(trained):
    manifest = read_json(trained / "manifest.json")
    for target in TARGETS:
        entry = manifest[f"rfr.{target}.model.json"]
        assert entry["Kind"] == "rfr"
        assert entry["Target"] == target
    split = read_json(trained / "split.json")
    assert (len(split["train"]), len(split["validation"]), len(split["test"])) == (17, 2, 5)
    echo = read_json(trained / "train.config.json")
    assert echo["parameters"]["models"]["post_x"]["n_trees"] == 3


def test_tune_requires_forest(run, generated, tmp_path):
    result = run("train", generated / "dataset.csv", "--model", "svr", "--tune", "--out", tmp_path / "m")
    assert result.exit_code == 1


def test_unknown_setting_is_a_usage_error(tmp_path, generated):
    config = tmp_path / "bad.yaml"
    config.write_text("svr:\n  gamma: 1.0\n")
    result = CliRunner().invoke(cli, ["--config", str(config), "train", str(generated / "dataset.csv"),
                                      "--model", "svr", "--out", str(tmp_path / "m")])
    assert result.exit_code == 1
    assert "svr.gamma" in result.output


def test_benchmark(run, generated, tmp_path):
    out = tmp_path / "report"
    result = run("evaluate", generated / "dataset.csv", "--out", out)
    assert result.exit_code == 0, result.output
    report = read_json(out / "report.json")
    assert [(row["model"], row["target"]) for row in report["rows"]] == [
        (kind, target) for kind in ("svr", "rfr") for target in TARGETS
    ]
    assert "RFR" in result.output


def test_evaluate_trained_models(run, generated, trained, tmp_path):
    out = tmp_path / "report"
    result = run("evaluate", generated / "dataset.csv", trained, "--out", out)
    assert result.exit_code == 0, result.output
    report = read_json(out / "report.json")
    assert {row["model"] for row in report["rows"]} == {"rfr"}
    assert report["split_sizes"] == {"train": 17, "validation": 2, "test": 5}


def test_missing_model_file(run, generated, trained, tmp_path):
    (trained / "rfr.post_y.model.json").unlink()
    result = run("evaluate", generated / "dataset.csv", trained, "--out", tmp_path / "report")
    assert result.exit_code == 3


def test_changed_model_file(run, generated, trained, tmp_path):
    path = trained / "rfr.post_theta.model.json"
    path.write_text(path.read_text().replace('"mtry"', '"mtry" ', 1))
    result = run("evaluate", generated / "dataset.csv", trained, "--out", tmp_path / "report")
    assert result.exit_code == 3


def test_missing_dataset(run, tmp_path):
    assert run("train", tmp_path / "absent.csv", "--out", tmp_path / "m").exit_code == 3


def test_optimize_identity_models(run, identity_models, contexts, tmp_path):
    """Test dat de optimalisatie met identiteitsmodellen naar de referentie convergeert."""
    out = tmp_path / "recommendations"
    result = run("optimize", contexts, identity_models, "--model", "svr", "--out", out)
    assert result.exit_code == 0, result.output
    recommendation = read_json(out / "recommendations.json")["recommendations"][0]
    assert recommendation["feasible"]
    assert recommendation["bounds"] == {"x": [0.0, 94.0], "y": [0.0, 130.0], "theta": [0.0, 0.0]}
    assert recommendation["best"]["objective_value"] < 20.0
    assert recommendation["best"]["chi"]["pre_offset_theta"] == 0.0
    assert len(pd.read_csv(out / "trace.0.csv")) == 6
    assert "context 0: chi = " in result.output


def test_optimize_infeasible(run, identity_models, contexts, tmp_path):
    override = tmp_path / "override.json"
    override.write_text(json.dumps({"thresholds": {"tau_x": 1.0}, "bounds": {"x": [50.0, 94.0]}}))
    out = tmp_path / "recommendations"
    result = run("optimize", contexts, identity_models, "--model", "svr", "--out", out, "--override", override)
    assert result.exit_code == 2
    recommendation = read_json(out / "recommendations.json")["recommendations"][0]
    assert not recommendation["feasible"]
    assert recommendation["worst_slack"] <= -49.0
    assert read_json(out / "optimize_run_info.json")["result"].startswith("failed")


def test_unknown_override_block(run, identity_models, contexts, tmp_path):
    override = tmp_path / "override.json"
    override.write_text(json.dumps({"weights": {}}))
    result = run("optimize", contexts, identity_models, "--model", "svr", "--out", tmp_path / "o",
                 "--override", override)
    assert result.exit_code == 1


def test_predict(run, identity_models, contexts, tmp_path):
    out = tmp_path / "predictions"
    result = run("predict", contexts, identity_models, "--model", "svr", "--out", out)
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out / "predictions.csv")
    assert list(frame["predicted_post_x"]) == [40.0]
    assert list(frame["predicted_post_y"]) == [30.0]
    assert list(frame["predicted_post_theta"]) == [0.5]


def assert_same_files(first, second, filenames):
    for filename in filenames:
        assert calculate_md5(first / filename) == calculate_md5(second / filename), filename


def test_train_is_reproducible(run, generated, trained, tmp_path):
    again = tmp_path / "again"
    assert run("train", generated / "dataset.csv", "--model", "rfr", "--out", again).exit_code == 0
    assert_same_files(trained, again, [f"rfr.{target}.model.json" for target in TARGETS]
                      + ["split.json", "train.config.json", "manifest.json"])


def test_evaluate_is_reproducible(run, generated, trained, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    for out in (first, second):
        assert run("evaluate", generated / "dataset.csv", trained, "--out", out).exit_code == 0
    assert_same_files(first, second, ["report.json", "report.txt", "residuals.csv"])


def test_benchmark_is_reproducible(run, generated, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    for out in (first, second):
        assert run("evaluate", generated / "dataset.csv", "--out", out).exit_code == 0
    assert_same_files(first, second, ["report.json", "report.txt", "residuals.csv"])


def test_optimize_is_reproducible(run, identity_models, contexts, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    for out in (first, second):
        assert run("optimize", contexts, identity_models, "--model", "svr", "--out", out).exit_code == 0
    assert_same_files(first, second, ["recommendations.json", "trace.0.csv"])


def test_optimize_generated_contexts(run, generated, trained, tmp_path):
    """Test dat elke gegenereerde context een haalbare aanbeveling met slacks krijgt."""
    override = tmp_path / "override.json"
    override.write_text(json.dumps({"thresholds": {"tau_x": 1000.0, "tau_y": 1000.0, "tau_theta": 90.0}}))
    first, second = tmp_path / "first", tmp_path / "second"
    for out in (first, second):
        result = run("optimize", generated / "contexts.csv", trained, "--out", out, "--override", override)
        assert result.exit_code == 0, result.output
    recommendations = read_json(first / "recommendations.json")["recommendations"]
    assert [entry["index"] for entry in recommendations] == list(range(6))
    for entry in recommendations:
        assert entry["feasible"]
        assert len(entry["best"]["slacks"]) == 3
        assert min(entry["best"]["slacks"]) >= 0.0
    assert_same_files(first, second, ["recommendations.json"] + [f"trace.{index}.csv" for index in range(6)])
