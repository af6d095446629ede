import json

import pytest
import yaml

from erach import cli

TINY = {
    "protocol": "erach",
    "seed": 3,
    "replicas": 1,
    "eval_episodes": 1,
    "calibration_episodes": 1,
    "timing": {"opportunities": 20},
    "training": {"episodes": 3, "hidden": [8]},
}


def write(tmp_path, doc):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def test_simulate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(write(tmp_path, TINY)), "--out", str(out)]) == 0
    assert "throughput_bps" in capsys.readouterr().out
    for name in ("episodes.csv", "training.csv", "config.yaml", "summary.json", "checkpoints/agent_0.bin"):
        assert (out / name).exists()
    assert json.loads((out / "summary.json").read_text())["ok"] is True


def test_flags_override_config(tmp_path, capsys):
    args = ["simulate", "--config", str(write(tmp_path, TINY)), "--protocol", "rach", "--seed", "9",
            "--episodes", "7", "--replicas", "2", "--print-config"]
    assert cli.main(args) == 0
    doc = yaml.safe_load(capsys.readouterr().out)
    assert (doc["protocol"], doc["seed"], doc["replicas"], doc["training"]["episodes"]) == ("rach", 9, 2, 7)


@pytest.mark.parametrize("doc", [{"seed": 1}, {**TINY, "bogus": 1}, {**TINY, "num_uts": 0}])
def test_bad_config_exits_2(tmp_path, doc, capsys):
    assert cli.main(["simulate", "--config", str(write(tmp_path, doc))]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_divergence_exits_1(tmp_path, capsys):
    doc = {**TINY, "reward": {"mu": float("nan"), "scale": 1.0, "penalty": 1.0}}
    assert cli.main(["simulate", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 1
    assert "diverged" in capsys.readouterr().err


def test_sweep_rho(tmp_path, capsys):
    doc = {**TINY, "sweeps": {"rho": [0.0, 1.0], "trailing_window": 2}}
    assert cli.main(["sweep-rho", "--config", str(write(tmp_path, doc)), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "sweep_rho.csv").exists()
    assert "rho=0.0" in capsys.readouterr().out
