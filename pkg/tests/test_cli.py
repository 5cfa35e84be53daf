import json

import pytest
import yaml

from uafd.cli import main
from uafd.models import load_checkpoint
from uafd.signal import load_dataset

CONFIG = {
    "seed": 1,
    "data": {"num_classes": 3, "per_class_count": 15},
    "models": {"kinds": ["De1"], "scale": 0.1, "epochs": 1, "batch_size": 16},
    "predictors": {"k": 2},
    "scenarios": {"epistemic": [0], "aleatoric": False},
    "output": {"timing": "omit"},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "suite.yaml"
    path.write_text(yaml.safe_dump(CONFIG))
    return path


def test_synth_ingest_train(tmp_path, capsys):
    series = tmp_path / "raw"
    assert main(["synth", "--classes", "3", "--length", "2000", "--series-dir", str(series)]) == 0
    assert len(list(series.glob("*.f32le"))) == 3
    assert main(["ingest", "--dir", str(series), "--out", str(tmp_path / "d.npz")]) == 0
    ds = load_dataset(tmp_path / "d.npz")
    assert ds.class_counts == (8, 8, 8)
    ck = tmp_path / "m.json"
    assert main(["train", "--data", str(tmp_path / "d.npz"), "--model", "De1", "--scale", "0.1",
                 "--epochs", "1", "--batch-size", "8", "--out", str(ck)]) == 0
    assert load_checkpoint(ck).spec.num_classes == 3
    assert "train accuracy" in capsys.readouterr().out


def test_synth_dataset(tmp_path):
    out = tmp_path / "d.npz"
    assert main(["synth", "--classes", "2", "--per-class", "5", "--out", str(out)]) == 0
    assert len(load_dataset(out)) == 10


def test_suite_and_report(tmp_path, config, capsys):
    out = tmp_path / "res"
    assert main(["suite", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "report.csv").exists() and (out / "report.json").exists()
    assert "tau1 <= tau2" in capsys.readouterr().out
    assert main(["report", "--json", str(out / "report.json"), "--out", str(tmp_path / "r.csv")]) == 0
    assert (tmp_path / "r.csv").read_text() == (out / "report.csv").read_text()


def test_scenario(tmp_path, config):
    out = tmp_path / "one"
    assert main(["scenario", "--config", str(config), "--model", "De1", "--noise", "gaussian",
                 "--snr", "-5", "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["reports"][0]["spec"]["key"] == "gaussian@-5dB"
    assert main(["scenario", "--config", str(config), "--model", "De1"]) == 2


def test_suite_failure_exit_code(tmp_path):
    raw = {**CONFIG, "scenarios": {"epistemic": [5], "aleatoric": False}}
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(raw))
    assert main(["suite", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


def test_errors_go_to_stderr(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("models: {depth: 3}\n")
    assert main(["suite", "--config", str(path)]) == 1
    assert "depth" in capsys.readouterr().err
    assert main(["ingest", "--dir", str(tmp_path / "nope"), "--out", str(tmp_path / "x.npz")]) == 1


def test_gradcheck_primitives_only(capsys):
    assert main(["gradcheck", "--models"]) == 0
    assert "PASS" in capsys.readouterr().out
