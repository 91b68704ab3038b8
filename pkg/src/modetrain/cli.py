"""Command-line entry point.

Subcommands: train (config-driven experiment), eval (exact LL/KL of a
checkpoint), ground-state (solve one model), diagnose (model report,
certainty curves, appendix law suites), bench (solver vs Gibbs), and
make-data (export datasets).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import datasets, diagnostics, experiments, solvers
from .rbm import Convention, DataDistribution, exact_log_likelihood, load_checkpoint
from .solvers import ModeMethod


def _print_json(doc, out: str | None):
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_train(args):
    cfg = experiments.load_experiment_config(args.config)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    summary = experiments.run_experiment(cfg, jobs=args.jobs)
    print(json.dumps({"name": summary["name"],
                      "out_dir": str(cfg.resolved_out_dir()),
                      "best_log_likelihood": summary["best_log_likelihood"]},
                     indent=1))


def _cmd_eval(args):
    rbm = load_checkpoint(args.checkpoint)
    data = DataDistribution.from_json(Path(args.data).read_text())
    total, kl = exact_log_likelihood(rbm, data)
    _print_json({
        "log_likelihood": total,
        "kl": kl,
        "avg_log_likelihood": total / int(data.multiset_counts.sum()),
    }, args.out)


def _cmd_ground_state(args):
    rbm = load_checkpoint(args.checkpoint)
    gs = solvers.sample_mode(
        rbm,
        ModeMethod(args.method),
        budget_time=args.budget_time,
        rng=np.random.default_rng(args.seed),
    )
    _print_json({
        "visible": [int(x) for x in gs.visible],
        "hidden": [int(x) for x in gs.hidden],
        "energy": gs.energy,
        "exact": gs.exact,
        "convention": gs.convention.value,
    }, args.out)


def _cmd_diagnose_model(args):
    rbm = load_checkpoint(args.checkpoint)
    report = {"n_visible": rbm.n_visible, "n_hidden": rbm.n_hidden,
              "convention": rbm.convention.value}
    if min(rbm.n_visible, rbm.n_hidden) <= 20:
        gs = solvers.exhaustive_ground_state(rbm)
        report["ground_state_energy"] = gs.energy
        report["ground_state_energy_pm"] = solvers.plus_minus_energy(rbm, gs)
    if rbm.n_visible <= diagnostics.MARGINAL_CAP_BITS:
        mc = diagnostics.modal_correspondence(rbm)
        report["modal_correspondence"] = mc.equal
        report["r_at_marginal_mode"] = mc.r_at_marginal_mode
    if rbm.n_visible + rbm.n_hidden <= diagnostics.VARIANCE_CAP_BITS:
        report["energy_variance"] = diagnostics.energy_variance(rbm)
    pm, _ = solvers.convert_convention(rbm, Convention.PLUS_MINUS)
    folded = solvers.fold_ghost_spins(pm)
    if min(folded.n_visible, folded.n_hidden) <= 20 and np.abs(folded.weights).sum() > 0:
        gauged = solvers.gauge_transform(
            folded, solvers.exhaustive_ground_state(folded))
        report["frustration_index"] = solvers.frustration_index(gauged)
    _print_json(report, args.out)


def _cmd_diagnose_certainty(args):
    data = datasets.shifting_bar(args.length, args.bar)
    curves = experiments.run_certainty_ensemble(
        data, args.n_hidden, args.updates, args.eps, args.ensemble,
        record_every=args.record_every, seed_base=args.seed, jobs=args.jobs)
    experiments.write_certainty_csv(curves, args.out)
    print(f"wrote {args.out} (final mean r = {curves['mean_r'][-1]:.4f})")


def _cmd_diagnose_appendix(args):
    report = {
        "energy_laws": diagnostics.energy_law_suite(
            seeds=args.seeds, max_size=args.max_size, seed_base=args.seed),
        "modal_correspondence": [
            diagnostics.modal_correspondence_suite(
                n, seeds=args.seeds, sigma=args.sigma, seed_base=args.seed)
            for n in args.sizes
        ],
    }
    _print_json(report, args.out)


def _cmd_bench(args):
    report = diagnostics.benchmark_solver_vs_cd(
        args.n, budget_steps=args.steps, seeds=args.seeds,
        seed_base=args.seed, exchange_rate=args.exchange_rate)
    doc = dataclasses.asdict(report)
    doc["energies_solver"] = [float(x) for x in report.energies_solver]
    doc["energies_cd"] = [float(x) for x in report.energies_cd]
    doc["delta_eps_pct"] = [float(x) for x in report.delta_eps_pct]
    _print_json(doc, args.out)


def _cmd_make_data(args):
    if args.kind == "shifting_bar":
        data = datasets.shifting_bar(args.length, args.bar, args.inverted)
    elif args.kind == "bars_and_stripes":
        data = datasets.bars_and_stripes(args.size)
    elif args.kind == "random_support":
        data = datasets.random_support(args.n, args.support,
                                       np.random.default_rng(args.seed))
    elif args.kind == "mnist":
        mnist = datasets.load_mnist(args.images, args.labels, args.threshold)
        images = mnist.images[:args.limit] if args.limit else mnist.images
        uniq, counts = np.unique(images, axis=0, return_counts=True)
        data = DataDistribution.from_counts(uniq, counts)
    else:
        raise ValueError(f"unknown dataset kind {args.kind!r}")
    Path(args.out).write_text(data.to_json() + "\n")
    print(f"wrote {args.out} ({data.n_patterns} patterns)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modetrain",
        description="Mode-assisted RBM training, evaluation and diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a config-driven experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output root (overrides config/$MODETRAIN_OUT)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="exact log-likelihood/KL of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset JSON from make-data")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ground-state", help="solve one model for its mode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", choices=[m.value for m in ModeMethod],
                   default="exhaustive")
    p.add_argument("--budget-time", type=float, default=500.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ground_state)

    p = sub.add_parser("diagnose", help="model reports and law suites")
    dsub = p.add_subparsers(dest="diagnose_command", required=True)

    d = dsub.add_parser("model", help="single-checkpoint diagnostic report")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--out")
    d.set_defaults(func=_cmd_diagnose_model)

    d = dsub.add_parser("certainty", help="hidden-certainty curves under CD-1")
    d.add_argument("--length", type=int, default=15)
    d.add_argument("--bar", type=int, default=1)
    d.add_argument("--n-hidden", type=int, default=10)
    d.add_argument("--updates", type=int, default=3000)
    d.add_argument("--eps", type=float, default=0.2)
    d.add_argument("--ensemble", type=int, default=200)
    d.add_argument("--record-every", type=int, default=5)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--jobs", type=int, default=1)
    d.add_argument("--out", required=True, help="CSV output path")
    d.set_defaults(func=_cmd_diagnose_certainty)

    d = dsub.add_parser("appendix", help="energy-law and mode-equality suites")
    d.add_argument("--seeds", type=int, default=100)
    d.add_argument("--max-size", type=int, default=4)
    d.add_argument("--sizes", type=int, nargs="+", default=[4, 6])
    d.add_argument("--sigma", type=float, default=0.1)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out")
    d.set_defaults(func=_cmd_diagnose_appendix)

    p = sub.add_parser("bench", help="dynamical solver vs Gibbs at equal cost")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--steps", type=int, help="Euler steps (default 2*n)")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0, dest="seed")
    p.add_argument("--exchange-rate", type=float,
                   help="pin the CD-sweeps-per-step rate instead of measuring")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("make-data", help="export a dataset as JSON")
    msub = p.add_subparsers(dest="kind", required=True)
    d = msub.add_parser("shifting_bar")
    d.add_argument("--length", type=int, required=True)
    d.add_argument("--bar", type=int, required=True)
    d.add_argument("--inverted", action="store_true")
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_make_data)
    d = msub.add_parser("bars_and_stripes")
    d.add_argument("--size", type=int, required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_make_data)
    d = msub.add_parser("random_support")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--support", type=int, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_make_data)
    d = msub.add_parser("mnist")
    d.add_argument("--images", required=True)
    d.add_argument("--labels", required=True)
    d.add_argument("--threshold", type=float, default=0.5)
    d.add_argument("--limit", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_make_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
