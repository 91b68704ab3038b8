"""Config-driven experiment runner: replicated training runs with JSONL
metrics, checkpoints, and aggregate summaries."""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datasets
from .rbm import DataDistribution, save_checkpoint
from .training import LearningRateSchedule, TrainConfig, train

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_ROOT_ENV = "MODETRAIN_OUT"


@dataclass(frozen=True)
class DatasetSpec:
    """Declarative dataset selection.

    kinds: shifting_bar(length, bar, inverted), bars_and_stripes(size),
    random_support(n, support, seed, per_replicate), mnist(images, labels,
    threshold), json(path).
    """

    kind: str
    length: int = 0
    bar: int = 0
    inverted: bool = False
    size: int = 0
    n: int = 0
    support: int = 0
    seed: int = 0
    per_replicate: bool = False
    images: str = ""
    labels: str = ""
    threshold: float = 0.5
    path: str = ""

    def build(self, replicate: int = 0):
        if self.kind == "shifting_bar":
            return datasets.shifting_bar(self.length, self.bar, self.inverted)
        if self.kind == "bars_and_stripes":
            return datasets.bars_and_stripes(self.size)
        if self.kind == "random_support":
            seed = self.seed + replicate if self.per_replicate else self.seed
            return datasets.random_support(self.n, self.support,
                                           np.random.default_rng(seed))
        if self.kind == "mnist":
            return datasets.load_mnist(self.images, self.labels, self.threshold)
        if self.kind == "json":
            return DataDistribution.from_json(Path(self.path).read_text())
        raise ValueError(f"unknown dataset kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetSpec
    train: TrainConfig
    replicates: int = 1
    seed_base: int = 0
    out_dir: str | None = None
    report_target: str = ""
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicate count must be >= 1")

    def resolved_out_dir(self) -> Path:
        root = self.out_dir or os.environ.get(OUTPUT_ROOT_ENV, "runs")
        return Path(root) / self.name


def load_experiment_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    exp = doc.get("experiment", {})
    ds = doc.get("dataset", {})
    model = doc.get("model", {})
    tr = dict(doc.get("train", {}))
    lr = LearningRateSchedule(kind=tr.pop("lr", "constant"), c=tr.pop("lr_c", 0.2))
    train_cfg = TrainConfig(
        n_updates=tr.pop("n_updates"),
        n_hidden=model["n_hidden"],
        learning_rate=lr,
        seed=exp.get("seed_base", 0),
        **tr,
    )
    return ExperimentConfig(
        name=exp["name"],
        dataset=DatasetSpec(**ds),
        train=train_cfg,
        replicates=exp.get("replicates", 1),
        seed_base=exp.get("seed_base", 0),
        out_dir=exp.get("out_dir"),
        report_target=exp.get("report_target", ""),
        checkpoint_every=exp.get("checkpoint_every", 0),
    )


def _config_to_jsonable(cfg: ExperimentConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg), sort_keys=True))


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _run_replicate(cfg: ExperimentConfig, replicate: int) -> dict:
    out = cfg.resolved_out_dir()
    seed = cfg.seed_base + replicate
    train_cfg = dataclasses.replace(cfg.train, seed=seed)
    data = cfg.dataset.build(replicate)

    ck_cb = None
    if cfg.checkpoint_every > 0:
        def ck_cb(i, model):
            save_checkpoint(model, out / f"rep{replicate:03d}.iter{i:08d}.checkpoint.json")

    rbm, records = train(train_cfg, data, checkpoint_cb=ck_cb,
                         checkpoint_every=cfg.checkpoint_every)
    write_jsonl(records, out / f"rep{replicate:03d}.metrics.jsonl")
    save_checkpoint(rbm, out / f"rep{replicate:03d}.checkpoint.json")

    lls = [r["log_likelihood"] for r in records if r["log_likelihood"] is not None]
    kls = [r["kl"] for r in records if r["kl"] is not None]
    final = records[-1]
    return {
        "replicate": replicate,
        "seed": seed,
        "final_iter": final["iter"],
        "final_log_likelihood": final["log_likelihood"],
        "final_kl": final["kl"],
        "best_log_likelihood": max(lls) if lls else None,
        "best_kl": min(kls) if kls else None,
        "n_mode_updates": final["n_mode_updates"],
    }


def _aggregate(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return {"median": None, "min": None, "max": None}
    return {
        "median": float(np.median(vals)),
        "min": float(min(vals)),
        "max": float(max(vals)),
    }


def _trace_aggregate(cfg: ExperimentConfig) -> list[dict]:
    """Per-iteration median/min/max of KL and log-likelihood across replicates."""
    out = cfg.resolved_out_dir()
    by_iter: dict[int, dict[str, list]] = {}
    for r in range(cfg.replicates):
        for rec in read_jsonl(out / f"rep{r:03d}.metrics.jsonl"):
            slot = by_iter.setdefault(rec["iter"], {"kl": [], "ll": []})
            if rec["kl"] is not None:
                slot["kl"].append(rec["kl"])
            if rec["log_likelihood"] is not None:
                slot["ll"].append(rec["log_likelihood"])
    rows = []
    for it in sorted(by_iter):
        kl, ll = by_iter[it]["kl"], by_iter[it]["ll"]
        rows.append({
            "iter": it,
            "kl_median": float(np.median(kl)) if kl else None,
            "kl_min": float(min(kl)) if kl else None,
            "kl_max": float(max(kl)) if kl else None,
            "ll_median": float(np.median(ll)) if ll else None,
            "ll_min": float(min(ll)) if ll else None,
            "ll_max": float(max(ll)) if ll else None,
        })
    return rows


def _certainty_worker(args):
    from .diagnostics import certainty_trajectory

    data, n_hidden, n_updates, eps, seed, record_every = args
    return certainty_trajectory(data, n_hidden, n_updates, eps, seed,
                                record_every=record_every)


def run_certainty_ensemble(data, n_hidden: int, n_updates: int, eps: float,
                           ensemble: int, record_every: int = 5,
                           seed_base: int = 0, jobs: int = 1):
    """Ensemble-averaged hidden-certainty curves under plain CD-1 training.

    Returns a dict of arrays: iters, mean_r, sigma_r (population std across
    the ensemble) and baseline_r (mean certainty of a fixed random visible
    configuration per run).
    """
    tasks = [(data, n_hidden, n_updates, eps, seed_base + s, record_every)
             for s in range(ensemble)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trajectories = list(pool.map(_certainty_worker, tasks, chunksize=4))
    else:
        trajectories = [_certainty_worker(t) for t in tasks]
    iters = trajectories[0].iters
    r_mode = np.stack([t.r_mode for t in trajectories])
    r_base = np.stack([t.r_baseline for t in trajectories])
    return {
        "iters": iters,
        "mean_r": r_mode.mean(axis=0),
        "sigma_r": r_mode.std(axis=0),
        "baseline_r": r_base.mean(axis=0),
    }


def write_certainty_csv(curves: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write("iter,mean_r,sigma_r,baseline_r\n")
        for i, mr, sr, br in zip(curves["iters"], curves["mean_r"],
                                 curves["sigma_r"], curves["baseline_r"]):
            fh.write(f"{i},{mr!r},{sr!r},{br!r}\n")


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Execute all replicates, write per-replicate metrics/checkpoints plus a
    summary, and return the summary document."""
    out = cfg.resolved_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(_config_to_jsonable(cfg), indent=1, sort_keys=True) + "\n")

    if jobs > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_replicate, cfg, r)
                       for r in range(cfg.replicates)]
            per_rep = [f.result() for f in futures]
    else:
        per_rep = [_run_replicate(cfg, r) for r in range(cfg.replicates)]
    per_rep.sort(key=lambda d: d["replicate"])

    trace = _trace_aggregate(cfg)
    with open(out / "trace.csv", "w") as fh:
        cols = ["iter", "kl_median", "kl_min", "kl_max",
                "ll_median", "ll_min", "ll_max"]
        fh.write(",".join(cols) + "\n")
        for row in trace:
            fh.write(",".join("" if row[c] is None else repr(row[c]) for c in cols) + "\n")

    summary = {
        "name": cfg.name,
        "report_target": cfg.report_target,
        "replicates": per_rep,
        "best_log_likelihood": max(
            (r["best_log_likelihood"] for r in per_rep
             if r["best_log_likelihood"] is not None), default=None),
        "final_kl": _aggregate([r["final_kl"] for r in per_rep]),
        "final_log_likelihood": _aggregate(
            [r["final_log_likelihood"] for r in per_rep]),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary
