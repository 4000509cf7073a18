import copy
import json

import numpy as np
import pytest

from gapbench.cli import main
from gapbench.experiment import (ExperimentConfig, emit_report, load_report,
                                 run_experiment)

BASE_CONFIG = {
    "datasets": [{"name": "sim", "generator": {
        "scenario_kind": "intersection", "n_scenes": 120, "seed": 4,
        "decision_slope": 3.0}}],
    "policies": [{"kind": "initial"}],
    "n_input_steps": [2],
    "step": 0.5,
    "splits": [{"method": "random_stratified", "seed": 1},
               {"method": "extreme"}],
    "models": [{"name": "logreg", "type": "logistic_regression",
                "epochs": 400},
               {"name": "cv", "type": "noisy_cv", "sigma_a": 0.5, "seed": 2}],
    "metrics": [{"name": "accuracy"}, {"name": "auc"}],
    "n_p": 10,
    "transform_seed": 3,
}


def config(**overrides):
    payload = copy.deepcopy(BASE_CONFIG)
    payload.update(overrides)
    return ExperimentConfig.from_dict(payload)


def test_grid_is_complete_and_unique():
    report = run_experiment(config())
    keys = [(c["dataset"], c["policy"], c["n_i"], c["split"], c["model"],
             c["metric"]) for c in report["cells"]]
    assert len(keys) == 1 * 1 * 1 * 2 * 2 * 2
    assert len(set(keys)) == len(keys)
    assert all(c["error"] is None for c in report["cells"])


def test_empty_model_list_keeps_dataset_stats():
    report = run_experiment(config(models=[]))
    assert report["cells"] == []
    assert report["dataset_stats"][0]["n_samples"] > 0
    assert report["dataset_stats"][0]["n_scenes"] == 120


def test_reports_are_byte_identical(tmp_path):
    cfg = config()
    r1 = run_experiment(cfg)
    r2 = run_experiment(config())
    emit_report(r1, tmp_path / "a", figures=False)
    emit_report(r2, tmp_path / "b", figures=False)
    assert (tmp_path / "a/report.json").read_bytes() \
        == (tmp_path / "b/report.json").read_bytes()
    assert (tmp_path / "a/report.csv").read_bytes() \
        == (tmp_path / "b/report.csv").read_bytes()


def test_report_json_roundtrip(tmp_path):
    report = run_experiment(config())
    emit_report(report, tmp_path, figures=False)
    assert load_report(tmp_path / "report.json") == report


def test_report_csv_shape(tmp_path):
    report = run_experiment(config())
    emit_report(report, tmp_path, figures=False)
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert len(lines) == len(report["cells"]) + 1
    header = lines[0].split(",")
    assert "baseline" in header and "policy_check" in header
    for c in report["cells"]:  # binary metrics always carry a baseline
        if c["metric"] in ("accuracy", "auc", "tnr_pr") and c["error"] is None:
            assert c["baseline"] is not None


def test_per_cell_failures_do_not_abort():
    # a dataset too small to split fails all its cells; the other dataset
    # still runs, and the grid stays complete either way
    tiny = {"name": "tiny", "generator": {
        "scenario_kind": "intersection", "n_scenes": 4, "seed": 8,
        "decision_slope": 3.0}}
    cfg = config(datasets=[tiny] + copy.deepcopy(BASE_CONFIG)["datasets"])
    report = run_experiment(cfg)
    assert len(report["cells"]) == 2 * 2 * 2 * 2
    tiny_cells = [c for c in report["cells"] if c["dataset"] == "tiny"]
    assert tiny_cells and all("split failed" in c["error"] for c in tiny_cells)
    sim_cells = [c for c in report["cells"] if c["dataset"] == "sim"]
    assert sim_cells and all(c["error"] is None for c in sim_cells)


def test_transform_route_is_logged():
    cfg = config(metrics=[{"name": "auc"}, {"name": "miss_rate"}])
    report = run_experiment(cfg)
    routes = {(c["model"], c["metric"]): c["transform"]
              for c in report["cells"] if c["error"] is None}
    assert routes[("logreg", "auc")] == "identity"
    assert routes[("cv", "auc")] == "trajectory->binary"
    assert routes[("cv", "miss_rate")] == "identity"
    assert routes.get(("logreg", "miss_rate"),
                      "binary->trajectory") == "binary->trajectory"


def test_policy_gating_recorded():
    cfg = config(policies=[{"kind": "critical"}],
                 metrics=[{"name": "accuracy"}, {"name": "tnr_pr"}])
    report = run_experiment(cfg)
    checks = {(c["metric"]): c["policy_check"] for c in report["cells"]
              if c["model"] == "logreg" and c["error"] is None}
    assert checks.get("accuracy") == "warn"
    assert checks.get("tnr_pr") == "pass"


def test_training_never_sees_test_outputs():
    # canary: mutate the test windows after splitting; weights must not move
    from gapbench.extraction import T0Policy, extract_dataset
    from gapbench.generator import GeneratorConfig, generate
    from gapbench.models import LogisticRegressionModel
    from gapbench.scenario import make_scenario
    from gapbench.splitting import split_random_stratified

    scenes, _ = generate(GeneratorConfig(n_scenes=120, seed=4,
                                         decision_slope=3.0))
    ds = extract_dataset(scenes, T0Policy.initial(), 2, 0.5,
                         make_scenario("intersection"))
    split = split_random_stratified(ds, 1)
    train = [ds.samples[i] for i in split.train_idx]

    model = LogisticRegressionModel(epochs=300)
    model.fit(train)
    w_before = model.model.weights.copy()

    for i in split.test_idx:
        ds.samples[i].x_o[:] = 0.0
        ds.samples[i].a = 1 - ds.samples[i].a
    model2 = LogisticRegressionModel(epochs=300)
    model2.fit([ds.samples[i] for i in split.train_idx])
    assert np.array_equal(w_before, model2.model.weights)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**copy.deepcopy(BASE_CONFIG),
                                    "unknown_key": 1})
    bad = copy.deepcopy(BASE_CONFIG)
    bad["datasets"] = [{"name": "x", "path": "/does/not/exist"}]
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)
    bad = copy.deepcopy(BASE_CONFIG)
    bad["models"] = [{"name": "x"}]
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)


def test_seed_override():
    cfg = config()
    cfg.override_seeds(77)
    assert cfg.datasets[0]["generator"]["seed"] == 77
    assert cfg.splits[0]["seed"] == 77
    assert cfg.transform_seed == 77


def test_cli_out_env_override(tmp_path, monkeypatch):
    gen = {"scenario_kind": "intersection", "n_scenes": 3, "seed": 1}
    (tmp_path / "gen.json").write_text(json.dumps(gen))
    monkeypatch.setenv("GAPBENCH_OUT", str(tmp_path / "via_env"))
    assert main(["generate", "--config", str(tmp_path / "gen.json")]) == 0
    assert (tmp_path / "via_env/manifest.json").exists()
    monkeypatch.delenv("GAPBENCH_OUT")
    with pytest.raises(SystemExit):
        main(["generate", "--config", str(tmp_path / "gen.json")])


def test_cli_generate_run_report(tmp_path):
    gen = {"scenario_kind": "intersection", "n_scenes": 40, "seed": 4,
           "decision_slope": 3.0}
    (tmp_path / "gen.json").write_text(json.dumps(gen))
    assert main(["generate", "--config", str(tmp_path / "gen.json"),
                 "--out", str(tmp_path / "g")]) == 0
    assert len(list((tmp_path / "g/scenes").glob("*.csv"))) == 40
    assert (tmp_path / "g/manifest.json").exists()

    exp = copy.deepcopy(BASE_CONFIG)
    exp["datasets"] = [{"name": "disk", "path": str(tmp_path / "g/scenes")}]
    (tmp_path / "exp.json").write_text(json.dumps(exp))
    assert main(["run", "--config", str(tmp_path / "exp.json"),
                 "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r/report.json").exists()
    assert (tmp_path / "r/report.csv").exists()
    assert list((tmp_path / "r/figures").glob("*.png"))

    assert main(["report", "--report", str(tmp_path / "r/report.json"),
                 "--out", str(tmp_path / "r2")]) == 0
    assert (tmp_path / "r2/report.json").read_bytes() \
        == (tmp_path / "r/report.json").read_bytes()

    assert main(["extract", "--config", str(tmp_path / "exp.json"),
                 "--out", str(tmp_path / "ds")]) == 0
    assert (tmp_path / "ds/disk__initial__ni2.csv").exists()
