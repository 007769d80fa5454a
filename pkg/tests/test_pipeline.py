import json

import numpy as np
import pytest
import yaml

from teq.cli import main
from teq.pipeline import ConfigError, PipelineConfig, Run, load_config, parse_duration, run_pipeline


def small_config(root, name="run", data="data", seed=7):
    doc = {
        "seed": seed,
        "run_dir": str(root / name),
        "dataset": {"path": str(root / data), "generate": True},
        "synth": {"alerts": 6000, "machines": 600},
        "zoo": {"params": {"rf": {"n_trees": 8}, "gbt": {"n_rounds": 8}, "mlp": {"epochs": 2},
                           "lr": {"epochs": 40}}},
        "explain": {"rows": 200, "repeats": 1, "points": 2, "background": 4, "samples": 8},
    }
    path = root / f"{name}.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    a = run_pipeline(small_config(root, "a", "data_a"))
    b = run_pipeline(small_config(root, "b", "data_b"))
    return a, b


def test_outputs_present(two_runs):
    res, _ = two_runs
    out = res.run_dir
    for rel in ["manifest.json", "features/feature_spec.json", "zoo/window_0/metrics.csv", "zoo/window_2/selection.json",
                "triage/triage_report.json", "triage/queue.csv", "decay/decay_report.json", "decay/decay.csv",
                "explain/importance_report.json", "explain/shapley.csv"]:
        assert (out / rel).is_file(), rel
    metrics = (out / "zoo/window_0/metrics.csv").read_text().splitlines()
    assert len(metrics) == 73
    decay = json.loads((out / "decay/decay_report.json").read_text())
    assert decay["fixed"][0]["roc_auc"] == decay["retrain"][0]["roc_auc"]


def test_deterministic_reports(two_runs):
    a, b = two_runs
    ma = json.loads(a.manifest.read_text())
    mb = json.loads(b.manifest.read_text())
    assert ma["outputs"] == mb["outputs"]
    assert ma["inputs"] == mb["inputs"]


def test_missing_dataset_path(tmp_path):
    with pytest.raises(ConfigError, match="dataset.path"):
        PipelineConfig.from_dict({"seed": 1, "dataset": {"generate": True}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"dataset": {"path": str(tmp_path / "nothing")}})
    with pytest.raises(ConfigError, match="unknown"):
        PipelineConfig.from_dict({"dataset": {"path": "x", "generate": True}, "zoo": {"windowz": 3}})
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"dataset": {"path": "x", "generate": True}, "zoo": {"params": {"rf": {"trees": 3}}}})


def test_bundled_config_and_overrides():
    cfg = load_config()
    assert cfg.synth.alerts == 50_000 and cfg.zoo.windows == 3 and cfg.context.width == 90
    cfg = load_config(None, {"triage.target_recall": 0.9, "seed": 3})
    assert cfg.triage.target_recall == 0.9 and cfg.seed == 3


def test_durations():
    assert [parse_duration(x) for x in ("90", "2m", "1h", "7d", 30)] == [90, 120, 3600, 604800, 30]
    with pytest.raises(ValueError):
        parse_duration("3w")


def test_cli_small_commands(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--out", str(data), "--alerts", "1500", "--seed", "2"]) == 0
    assert main(["featurize", "--alerts", str(data / "alerts.jsonl"), "--out", str(tmp_path / "f"), "--matrix"]) == 0
    spec = tmp_path / "f" / "feature_spec.json"
    X = np.load(tmp_path / "f" / "content.npy")
    assert main(["featurize", "--alerts", str(data / "alerts.jsonl"), "--out", str(tmp_path / "g"),
                 "--transform", str(spec)]) == 0
    assert np.array_equal(np.load(tmp_path / "g" / "content.npy"), X)
    assert main(["context", "--alerts", str(data / "alerts.jsonl"), "--out", str(tmp_path / "c"),
                 "--windows", "1m,1h"]) == 0
    assert np.load(tmp_path / "c" / "context.npy").shape[1] == 20


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\ndataset: {generate: true}\n")
    assert main(["pipeline", "--config", str(bad)]) == 2
    assert "dataset.path" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["decay", "--mode", "sideways"])


def test_cli_stage_commands(tmp_path, capsys):
    cfg = small_config(tmp_path)
    out = tmp_path / "cli"
    common = ["--config", str(cfg), "--out", str(out)]
    assert main(["zoo", *common, "--train-months", "2-6"]) == 0
    assert "winner" in capsys.readouterr().out
    assert (out / "zoo/window_0/selection.json").is_file()
    assert main(["train", *common, "--task", "context", "--algo", "lr"]) == 0
    assert (out / "context_lr.json").is_file()


@pytest.mark.slow
def test_drift_free_decay_is_flat(tmp_path):
    cfg = load_config(None, {"synth.drift_day": None, "run_dir": str(tmp_path / "run"),
                             "dataset.path": str(tmp_path / "data")})
    run = Run(cfg)
    run.synth()
    fixed, retrain = run.decay()
    f, r = fixed.series("fixed"), retrain.series("retrain")
    assert len(f) == len(r) == 3
    assert max(f) - min(f) <= 0.05
    assert all(abs(a - b) <= 0.05 for a, b in zip(f, r))
