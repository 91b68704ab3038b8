import json

import numpy as np
import pytest

from modetrain.cli import main
from modetrain.rbm import RbmParams, save_checkpoint

CONFIG_TOML = """
[experiment]
name = "cli-smoke"
replicates = 1
seed_base = 0

[dataset]
kind = "shifting_bar"
length = 5
bar = 1

[model]
n_hidden = 3

[train]
n_updates = 50
eval_every = 25
mode_method = "exhaustive"
"""


def run_cli(*argv):
    return main(list(argv))


def test_make_data_and_eval(tmp_path, capsys):
    data_path = tmp_path / "bar.json"
    assert run_cli("make-data", "shifting_bar", "--length", "5", "--bar", "1",
                   "--out", str(data_path)) == 0
    capsys.readouterr()

    ck = tmp_path / "model.json"
    save_checkpoint(RbmParams.zeros(5, 3), ck)
    assert run_cli("eval", "--checkpoint", str(ck), "--data", str(data_path)) == 0
    doc = json.loads(capsys.readouterr().out)
    assert abs(doc["log_likelihood"] - 5 * np.log(2.0 ** -5)) < 1e-10
    assert doc["kl"] > 0


def test_train_command(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CONFIG_TOML)
    assert run_cli("train", "--config", str(cfg), "--out", str(tmp_path)) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["name"] == "cli-smoke"
    assert (tmp_path / "cli-smoke" / "summary.json").exists()
    assert (tmp_path / "cli-smoke" / "rep000.metrics.jsonl").exists()


def test_ground_state_command(tmp_path, capsys):
    rng = np.random.default_rng(3)
    rbm = RbmParams(rng.standard_normal((4, 3)), rng.standard_normal(4),
                    rng.standard_normal(3))
    ck = tmp_path / "model.json"
    save_checkpoint(rbm, ck)
    assert run_cli("ground-state", "--checkpoint", str(ck)) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["exact"] is True
    assert len(doc["visible"]) == 4 and len(doc["hidden"]) == 3

    assert run_cli("ground-state", "--checkpoint", str(ck), "--method",
                   "memcomputing", "--budget-time", "50", "--seed", "1") == 0
    doc2 = json.loads(capsys.readouterr().out)
    assert doc2["exact"] is False


def test_diagnose_model_command(tmp_path, capsys):
    rng = np.random.default_rng(5)
    rbm = RbmParams(rng.standard_normal((4, 3)), rng.standard_normal(4),
                    rng.standard_normal(3))
    ck = tmp_path / "model.json"
    save_checkpoint(rbm, ck)
    out_path = tmp_path / "report.json"
    assert run_cli("diagnose", "model", "--checkpoint", str(ck),
                   "--out", str(out_path)) == 0
    doc = json.loads(out_path.read_text())
    assert "ground_state_energy" in doc
    assert "modal_correspondence" in doc
    assert 0.0 <= doc["frustration_index"] < 0.5


def test_diagnose_appendix_command(tmp_path, capsys):
    assert run_cli("diagnose", "appendix", "--seeds", "3", "--sizes", "3",
                   "--sigma", "0.1") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["energy_laws"]["max_mean_law_error"] < 1e-10
    assert doc["modal_correspondence"][0]["seeds"] == 3


def test_diagnose_certainty_command(tmp_path, capsys):
    out_path = tmp_path / "curve.csv"
    assert run_cli("diagnose", "certainty", "--length", "6", "--bar", "1",
                   "--n-hidden", "3", "--updates", "40", "--eps", "0.3",
                   "--ensemble", "2", "--record-every", "20",
                   "--out", str(out_path)) == 0
    lines = out_path.read_text().splitlines()
    assert lines[0] == "iter,mean_r,sigma_r,baseline_r"


def test_bench_command(tmp_path, capsys):
    assert run_cli("bench", "--n", "4", "--steps", "100", "--seeds", "2",
                   "--exchange-rate", "2.0") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["cd_sweeps"] == 200
    assert len(doc["delta_eps_pct"]) == 2


def test_error_exit_code(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    code = run_cli("eval", "--checkpoint", str(missing), "--data", str(missing))
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("""
[experiment]
name = "bad"
[dataset]
kind = "shifting_bar"
length = 5
bar = 9
[model]
n_hidden = 2
[train]
n_updates = 10
""")
    code = run_cli("train", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 1
    assert "error:" in capsys.readouterr().err
