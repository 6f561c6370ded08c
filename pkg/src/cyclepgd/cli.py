"""Command-line interface.

Subcommands: gen-data, train-toy, attack, eval, sweep, diagnose, verify.
Everything prints plot-ready CSV or JSON; no plotting here.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .attack import ATTACK_MODES, CYCLE_DETECT, AttackConfig, run_attack
from .datasets import LabeledDataset, load_csv, load_idx, save_csv, save_idx
from .diagnostics import detect_cycle_oracle, export_trajectory, lag_cosine_trace
from .fingerprint import FINGERPRINT_MODES
from .harness import (
    DEFAULT_EVAL_MODES,
    SYNTHETIC_KINDS,
    evaluate_clean,
    evaluate_robust,
    generate_synthetic_dataset,
    reduction_sweep,
    verify_cycle_soundness,
    verify_equivalence,
    write_report,
)
from .models import LinearSoftmaxClassifier, MlpClassifier, load_model, save_model


def _normalize_mode(mode: str) -> str:
    return mode.replace("-", "_")


def _add_attack_flags(p: argparse.ArgumentParser, with_mode: bool = True):
    p.add_argument("--eps", type=float, required=True, help="L-inf radius (dataset-specific)")
    p.add_argument("--alpha", type=float, default=None, help="step size (default eps/4)")
    p.add_argument("--iters", type=int, default=1000, help="iteration budget per image")
    if with_mode:
        p.add_argument("--mode", default=CYCLE_DETECT,
                       help="attack mode: " + ", ".join(m.replace("_", "-") for m in ATTACK_MODES))
    p.add_argument("--fingerprint", choices=FINGERPRINT_MODES, default="projected")
    p.add_argument("--clamp-domain", action="store_true",
                   help="keep x+delta inside the dataset's value range")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-trajectory", action="store_true")


def _config_from_args(args, mode: str | None = None) -> AttackConfig:
    return AttackConfig(
        eps=args.eps,
        alpha=args.alpha,
        t_iter=args.iters,
        mode=_normalize_mode(mode if mode is not None else args.mode),
        fingerprint_mode=args.fingerprint,
        clamp_to_domain=args.clamp_domain,
        seed=args.seed,
        record_trajectory=getattr(args, "record_trajectory", False),
    )


def _add_data_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", required=True, help="dataset CSV, or IDX image file when --labels is given")
    p.add_argument("--labels", default=None, help="IDX label file (switches --data to IDX images)")


def _load_dataset(args) -> LabeledDataset:
    if args.labels is not None:
        return load_idx(args.data, args.labels)
    return load_csv(args.data)


def _cmd_gen_data(args) -> int:
    dataset = generate_synthetic_dataset(args.kind, args.n, args.dim, args.classes, args.seed)
    if args.format == "csv":
        save_csv(dataset, args.out)
        print(f"wrote {len(dataset)} samples to {args.out}")
    else:
        labels_path = args.labels_out or (args.out + ".labels")
        save_idx(dataset, args.out, labels_path)
        print(f"wrote {len(dataset)} samples to {args.out} (labels: {labels_path})")
    return 0


def _cmd_train_toy(args) -> int:
    dataset = _load_dataset(args)
    if args.arch == "linear":
        model = LinearSoftmaxClassifier(
            n_classes=dataset.n_classes, n_steps=args.steps,
            learning_rate=args.lr, seed=args.seed,
        )
    else:
        model = MlpClassifier(
            n_classes=dataset.n_classes, hidden=args.hidden, activation=args.activation,
            n_steps=args.steps, learning_rate=args.lr, seed=args.seed,
        )
    model.fit(dataset.X, dataset.y)
    accuracy, _ = evaluate_clean(model, dataset)
    save_model(model, args.out)
    print(f"trained {model.model_id()}: clean accuracy {accuracy:.2f}% on {dataset.name}")
    print(f"weights written to {args.out}")
    return 0


def _outcome_lines(outcome, cfg) -> list[str]:
    lines = [
        f"status: {outcome.status}",
        f"iterations_used: {outcome.iterations_used} (budget {cfg.t_iter})",
    ]
    if outcome.adversarial_label is not None:
        lines.append(f"adversarial_label: {outcome.adversarial_label}")
    if outcome.cycle is not None:
        t0, t = outcome.cycle
        lines.append(f"cycle: first_visit={t0} detect={t} length={t - t0}")
    if outcome.restarts:
        lines.append(f"restarts: {outcome.restarts}")
    lines.append(f"max|delta|: {np.max(np.abs(outcome.final_delta)):.6g} (eps {cfg.eps})")
    return lines


def _cmd_attack(args) -> int:
    dataset = _load_dataset(args)
    model = load_model(args.model)
    cfg = _config_from_args(args)
    outcome = run_attack(model, dataset.image(args.index), int(dataset.y[args.index]),
                         cfg.for_image(args.index))
    for line in _outcome_lines(outcome, cfg):
        print(line)
    if args.out:
        doc = {
            "index": args.index,
            "status": outcome.status,
            "iterations_used": outcome.iterations_used,
            "adversarial_label": outcome.adversarial_label,
            "cycle": list(outcome.cycle) if outcome.cycle else None,
            "restarts": outcome.restarts,
            "final_delta": [repr(float(v)) for v in outcome.final_delta],
            "config": cfg.snapshot(),
        }
        with open(args.out, "w", encoding="ascii") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(f"outcome written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    dataset = _load_dataset(args)
    model = load_model(args.model)
    cfg = _config_from_args(args, mode=CYCLE_DETECT)
    modes = tuple(_normalize_mode(m) for m in args.modes.split(","))
    report = evaluate_robust(model, dataset, cfg, modes=modes)
    print(f"dataset: {report.dataset_name}  model: {report.model_id}")
    print(f"clean accuracy: {report.clean_accuracy:.2f}%  ({report.n_clean_correct}/{report.n_images})")
    for mode, result in report.modes.items():
        print(
            f"{mode}: robust accuracy {result['robust_accuracy']:.2f}%  "
            f"iterations {result['total_iterations']}"
        )
    if report.reduction_percent is not None:
        print(f"iteration reduction vs naive: {report.reduction_percent:.2f}%")
    if report.reduction_vs_early_success is not None:
        print(f"iteration reduction vs early-success: {report.reduction_vs_early_success:.2f}%")
    if args.out:
        write_report(report, args.out)
        print(f"report written to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    dataset = _load_dataset(args)
    model = load_model(args.model)
    cfg = _config_from_args(args, mode=CYCLE_DETECT)
    budgets = [int(b) for b in args.budgets.split(",")]
    curve = reduction_sweep(model, dataset, budgets, cfg)
    header = ("t_iter,naive_iterations,early_success_iterations,"
              "cycle_detect_iterations,reduction_percent,reduction_vs_early_success")
    rows = [header]
    for point in curve:
        rows.append(
            f"{point['t_iter']},{point['naive_iterations']},{point['early_success_iterations']},"
            f"{point['cycle_detect_iterations']},{point['reduction_percent']!r},"
            f"{point['reduction_vs_early_success']!r}"
        )
    text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text)
        print(f"sweep written to {args.out}")
    else:
        print(text, end="")
    return 0


def _cmd_diagnose(args) -> int:
    dataset = _load_dataset(args)
    model = load_model(args.model)
    cfg = replace(_config_from_args(args), record_trajectory=True)
    outcome = run_attack(model, dataset.image(args.index), int(dataset.y[args.index]),
                         cfg.for_image(args.index))
    for line in _outcome_lines(outcome, cfg):
        print(line)
    traj = outcome.trajectory
    if not traj.deltas:
        print("nothing to export: the clean input is already misclassified")
        return 1
    export_trajectory(traj, args.out_trajectory, cycle=outcome.cycle)
    print(f"trajectory written to {args.out_trajectory}")

    report = detect_cycle_oracle(traj)
    if report is not None:
        print(f"oracle: revisit at position {report.start}, length {report.length}")
    lags = [1, 2]
    if outcome.cycle is not None:
        length = outcome.cycle[1] - outcome.cycle[0]
        if length not in lags:
            lags.append(length)
    with open(args.out_cosine, "w", encoding="ascii") as fh:
        fh.write("lag,index,cosine\n")
        for lag in lags:
            if lag >= len(traj.signed_grads):
                continue
            for i, value in enumerate(lag_cosine_trace(traj.signed_grads, lag)):
                fh.write(f"{lag},{i},{value!r}\n")
    print(f"cosine traces written to {args.out_cosine}")
    return 0


def _cmd_verify(args) -> int:
    dataset = _load_dataset(args)
    model = load_model(args.model)
    cfg = _config_from_args(args, mode=CYCLE_DETECT)
    summary = verify_equivalence(model, dataset, cfg)
    print(
        f"equivalence: {summary['n_checked']} images, "
        f"{summary['n_mismatches']} verdict mismatches "
        f"({'PASS' if summary['n_mismatches'] == 0 else 'FAIL'})"
    )
    failures = summary["n_mismatches"]
    n_cycles = 0
    n_sound = 0
    for index, outcome in summary["cycle_outcomes"]:
        n_cycles += 1
        ok, detail = verify_cycle_soundness(
            model, dataset.image(index), int(dataset.y[index]), cfg.for_image(index), outcome
        )
        if ok:
            n_sound += 1
        else:
            failures += 1
            print(f"cycle soundness FAIL at image {index}: {detail}")
    print(f"cycle soundness: {n_sound}/{n_cycles} detected cycles verified "
          f"({'PASS' if n_sound == n_cycles else 'FAIL'})")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclepgd",
        description="L-inf PGD robustness evaluation with cycle-detection early termination",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=SYNTHETIC_KINDS, default="blobs")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "idx"), default="csv")
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", default=None, help="label file path for --format idx")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-toy", help="train a toy classifier")
    _add_data_flags(p)
    p.add_argument("--arch", choices=("linear", "mlp"), default="mlp")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("attack", help="attack one image and print the outcome")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--index", type=int, default=0)
    _add_attack_flags(p)
    p.add_argument("--out", default=None, help="write the outcome as JSON")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("eval", help="full robustness report over a dataset")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    _add_attack_flags(p, with_mode=False)
    p.add_argument("--modes", default=",".join(DEFAULT_EVAL_MODES),
                   help="comma-separated attack modes to compare")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="iteration-reduction curve over budgets")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    _add_attack_flags(p, with_mode=False)
    p.add_argument("--budgets", default="1,10,100,1000")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("diagnose", help="export trajectory and cosine traces for one image")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--index", type=int, default=0)
    _add_attack_flags(p)
    p.add_argument("--out-trajectory", default="trajectory.csv")
    p.add_argument("--out-cosine", default="cosine.csv")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("verify", help="run the equivalence and cycle-soundness oracles")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    _add_attack_flags(p, with_mode=False)
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
