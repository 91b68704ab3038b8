import json

import numpy as np
import pytest

from modetrain.experiments import (
    DatasetSpec,
    ExperimentConfig,
    load_experiment_config,
    read_jsonl,
    run_certainty_ensemble,
    run_experiment,
    write_certainty_csv,
)
from modetrain.datasets import shifting_bar
from modetrain.rbm import load_checkpoint
from modetrain.training import LearningRateSchedule, TrainConfig

CONFIG_TOML = """
[experiment]
name = "smoke"
replicates = 2
seed_base = 7
report_target = "table1"

[dataset]
kind = "shifting_bar"
length = 5
bar = 1

[model]
n_hidden = 3

[train]
n_updates = 100
eval_every = 25
lr = "constant"
lr_c = 0.2
p_max = 0.1
alpha_times_n = 20.0
beta = -6.0
mode_method = "exhaustive"
"""


def small_config(tmp_path, name="exp", n_updates=100, replicates=2, **train_kw):
    train_kw.setdefault("eval_every", 25)
    return ExperimentConfig(
        name=name,
        dataset=DatasetSpec(kind="shifting_bar", length=5, bar=1),
        train=TrainConfig(n_updates=n_updates, n_hidden=3,
                          learning_rate=LearningRateSchedule("constant", 0.2),
                          **train_kw),
        replicates=replicates,
        seed_base=0,
        out_dir=str(tmp_path),
    )


def test_load_toml_config(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(CONFIG_TOML)
    cfg = load_experiment_config(path)
    assert cfg.name == "smoke"
    assert cfg.replicates == 2
    assert cfg.seed_base == 7
    assert cfg.dataset.kind == "shifting_bar" and cfg.dataset.length == 5
    assert cfg.train.n_hidden == 3
    assert cfg.train.n_updates == 100
    assert cfg.train.learning_rate.kind == "constant"
    assert cfg.train.resolved_alpha == 20.0 / 100


def test_run_experiment_zero_updates(tmp_path):
    cfg = small_config(tmp_path, n_updates=0, replicates=1)
    summary = run_experiment(cfg)
    out = cfg.resolved_out_dir()
    assert (out / "config.json").exists()
    assert (out / "summary.json").exists()
    records = read_jsonl(out / "rep000.metrics.jsonl")
    assert len(records) == 1 and records[0]["iter"] == 0
    ck = load_checkpoint(out / "rep000.checkpoint.json")
    assert ck.n_visible == 5 and ck.n_hidden == 3
    assert summary["replicates"][0]["seed"] == 0


def test_run_experiment_deterministic_bytes(tmp_path):
    cfg_a = small_config(tmp_path / "a")
    cfg_b = small_config(tmp_path / "b")
    run_experiment(cfg_a)
    run_experiment(cfg_b)
    for rep in range(2):
        a = (cfg_a.resolved_out_dir() / f"rep{rep:03d}.metrics.jsonl").read_bytes()
        b = (cfg_b.resolved_out_dir() / f"rep{rep:03d}.metrics.jsonl").read_bytes()
        assert a == b


def test_run_experiment_parallel_matches_serial(tmp_path):
    cfg_a = small_config(tmp_path / "serial")
    cfg_b = small_config(tmp_path / "parallel")
    run_experiment(cfg_a, jobs=1)
    run_experiment(cfg_b, jobs=2)
    for rep in range(2):
        a = (cfg_a.resolved_out_dir() / f"rep{rep:03d}.metrics.jsonl").read_bytes()
        b = (cfg_b.resolved_out_dir() / f"rep{rep:03d}.metrics.jsonl").read_bytes()
        assert a == b
    sa = json.loads((cfg_a.resolved_out_dir() / "summary.json").read_text())
    sb = json.loads((cfg_b.resolved_out_dir() / "summary.json").read_text())
    sa["name"] = sb["name"] = ""
    assert sa == sb


def test_summary_recomputable_from_metrics(tmp_path):
    cfg = small_config(tmp_path)
    summary = run_experiment(cfg)
    out = cfg.resolved_out_dir()
    for rep_summary in summary["replicates"]:
        records = read_jsonl(out / f"rep{rep_summary['replicate']:03d}.metrics.jsonl")
        lls = [r["log_likelihood"] for r in records if r["log_likelihood"] is not None]
        assert rep_summary["best_log_likelihood"] == max(lls)
        assert rep_summary["final_log_likelihood"] == records[-1]["log_likelihood"]
    bests = [r["best_log_likelihood"] for r in summary["replicates"]]
    assert summary["best_log_likelihood"] == max(bests)


def test_trace_csv_written(tmp_path):
    cfg = small_config(tmp_path)
    run_experiment(cfg)
    lines = (cfg.resolved_out_dir() / "trace.csv").read_text().splitlines()
    assert lines[0].startswith("iter,kl_median")
    assert len(lines) > 2


def test_per_replicate_support(tmp_path):
    spec = DatasetSpec(kind="random_support", n=6, support=4, seed=0,
                       per_replicate=True)
    a = spec.build(0)
    b = spec.build(1)
    assert not np.array_equal(a.patterns, b.patterns)
    fixed = DatasetSpec(kind="random_support", n=6, support=4, seed=0)
    assert np.array_equal(fixed.build(0).patterns, fixed.build(1).patterns)


def test_checkpoint_every(tmp_path):
    cfg = small_config(tmp_path, name="ck", replicates=1)
    cfg = ExperimentConfig(**{**cfg.__dict__, "checkpoint_every": 50})
    run_experiment(cfg)
    out = cfg.resolved_out_dir()
    assert (out / "rep000.iter00000050.checkpoint.json").exists()
    assert (out / "rep000.iter00000100.checkpoint.json").exists()


def test_certainty_ensemble_csv(tmp_path):
    data = shifting_bar(6, 1)
    curves = run_certainty_ensemble(data, n_hidden=4, n_updates=60, eps=0.3,
                                    ensemble=3, record_every=20)
    assert len(curves["iters"]) == 4  # 0, 20, 40, 60
    path = tmp_path / "curve.csv"
    write_certainty_csv(curves, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,mean_r,sigma_r,baseline_r"
    assert len(lines) == 5


def test_invalid_dataset_kind():
    with pytest.raises(ValueError):
        DatasetSpec(kind="nonsense").build()


def test_replicates_validation(tmp_path):
    with pytest.raises(ValueError):
        small_config(tmp_path, replicates=0)
