"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 gradient check
failure.  Every error prints one line ``error: <kind>: <message>`` to stderr.
Relative ``--out`` paths resolve under ``$DSHGCN_OUTPUT_ROOT`` when it is set.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .data import (DatasetError, SyntheticConfig, convert_table, generate_synthetic, load_dataset,
                   write_dataset)
from .gradcheck import gradient_check
from .model import ABLATIONS
from .training import (TrainConfig, evaluate, load_checkpoint, run, save_checkpoint, split_dataset,
                       sweep_data_scale, sweep_layers)

EXIT_USAGE, EXIT_VALIDATION, EXIT_GRADCHECK = 1, 2, 3
OUTPUT_ROOT_ENV = "DSHGCN_OUTPUT_ROOT"
TASK_CLASSES = {"binary": 2, "ternary": 3}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_path(path: str) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _metrics_table(metrics) -> str:
    lines = [f"accuracy  {metrics.accuracy:.4f}", f"macro-F1  {metrics.f1:.4f}", f"AUC       {metrics.auc:.4f}",
             "confusion (rows = true class):"]
    lines += ["  " + " ".join(f"{v:6d}" for v in row) for row in metrics.confusion]
    return "\n".join(lines)


# -- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    dims = {"emotional": args.d_e, "attentional": args.d_a, "upper_body": args.d_u}
    rho_choices = [float(r) for r in args.rho_choices.split(",")] if args.rho_choices else None
    cfg = SyntheticConfig(n_students=args.students, snapshots=args.snapshots, n_classes=args.classes,
                          rho=args.rho, noise=args.noise, seed=args.seed, dims=dims, signal=args.signal,
                          deviation=args.deviation, rho_choices=rho_choices)
    try:
        cfg.validate()
    except ValueError as exc:
        raise DatasetError(str(exc)) from None
    out = _out_path(args.out)
    write_dataset(generate_synthetic(cfg), out)
    ds = load_dataset(out)
    m = ds.manifest
    counts = np.bincount(ds.labels(), minlength=m.n_classes).tolist()
    print(f"wrote {out}: {m.snapshots} snapshots x {m.students_per_snapshot} students, "
          f"{m.n_classes} classes {counts}, dims e/a/u = {m.d_e}/{m.d_a}/{m.d_u}")
    return 0


def cmd_convert(args) -> int:
    ds = convert_table(args.table, args.classes)
    out = _out_path(args.out)
    write_dataset(ds, out)
    print(f"wrote {out}: {len(ds)} snapshots")
    return 0


def _resolve_config(args) -> TrainConfig:
    base = TrainConfig.from_file(args.config).to_dict() if args.config else TrainConfig().to_dict()
    overrides = {"ablation": args.ablation, "epochs": args.epochs, "learning_rate": args.lr,
                 "seed": args.seed, "batch_size": args.batch_size, "dropout": args.dropout,
                 "hidden": args.hidden, "hyper_layers": args.L, "freq_layers": args.K, "l2": args.l2}
    base.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(base)


def _load_for_task(path: str, task: str):
    ds = load_dataset(path)
    if task is not None and ds.manifest.n_classes != TASK_CLASSES[task]:
        raise DatasetError(f"task {task} needs {TASK_CLASSES[task]} classes, dataset has {ds.manifest.n_classes}")
    return ds


def cmd_train(args) -> int:
    config = _resolve_config(args)
    ds = _load_for_task(args.data, args.task)
    out = _out_path(args.out)
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "config.json"), config.to_dict())
    res = run(config, ds)
    save_checkpoint(os.path.join(out, "checkpoint.json"), res.model, res.params)
    with open(os.path.join(out, "epochs.tsv"), "w") as fh:
        fh.write("epoch\ttrain_loss\ttrain_acc\ttest_acc\n")
        for epoch, loss, tr, te in res.history:
            fh.write(f"{epoch}\t{loss!r}\t{tr!r}\t{te!r}\n")
    train_set, _ = split_dataset(config, ds)
    report = {"n_params": res.n_params, "ablation": config.ablation,
              "train": evaluate(res.model, res.params, train_set, config.eval_batch).to_dict(),
              "test": res.metrics.to_dict() if res.metrics else None}
    _write_json(os.path.join(out, "metrics.json"), report)
    print(f"trained {config.ablation} ({res.n_params} parameters) in {res.seconds:.1f} s; artifacts in {out}")
    if res.metrics:
        print(_metrics_table(res.metrics))
    return 0


def cmd_eval(args) -> int:
    try:
        mcfg, params = load_checkpoint(args.checkpoint)
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"checkpoint {args.checkpoint}: {exc}") from None
    ds = load_dataset(args.data)
    m = ds.manifest
    if mcfg.dims != m.dims or mcfg.n_students != m.students_per_snapshot or mcfg.n_classes != m.n_classes:
        raise DatasetError(f"checkpoint expects dims {mcfg.dims}, {mcfg.n_students} students, "
                           f"{mcfg.n_classes} classes; dataset has {m.dims}, {m.students_per_snapshot}, {m.n_classes}")
    metrics = evaluate(mcfg, params, ds)
    out = _out_path(args.out) if args.out else os.path.join(os.path.dirname(args.checkpoint) or ".",
                                                             "eval_metrics.json")
    _write_json(out, metrics.to_dict())
    print(_metrics_table(metrics))
    return 0


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    results = gradient_check(seed=args.seed, n_students=args.students, hidden=args.dh,
                             hyper_layers=args.L, freq_layers=args.K, attention=not args.no_attention)
    ok = True
    lines = []
    for r in results:
        if not r.applicable:
            status = "n/a"
        else:
            status = "PASS" if r.passed else "FAIL"
            ok &= r.passed
        lines.append({"group": r.group, "coords": r.n_coords, "max_rel_error": r.max_rel_error, "status": status})
        print(f"{r.group:18s} {r.n_coords:6d} coords  max rel err {r.max_rel_error:.3e}  {status}")
    print(f"gradcheck {'passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f} s")
    if args.out:
        _write_json(_out_path(args.out), lines)
    if not ok:
        print("error: gradcheck: analytic gradient disagrees with finite differences", file=sys.stderr)
        return EXIT_GRADCHECK
    return 0


def cmd_sweep(args) -> int:
    config = _resolve_config(args)
    ds = load_dataset(args.data)
    out = _out_path(args.out)
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "config.json"), config.to_dict())
    if args.mode == "layers":
        span = list(range(1, args.max_layers + 1))
        grid = sweep_layers(config, ds, span, span)
        with open(os.path.join(out, "layers_grid.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L\\K"] + span)
            for L, row in zip(span, grid):
                w.writerow([L] + [repr(float(v)) for v in row])
        with open(os.path.join(out, "layers_long.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "K", "test_accuracy"])
            for i, L in enumerate(span):
                for j, K in enumerate(span):
                    w.writerow([L, K, repr(float(grid[i, j]))])
        print(f"wrote {len(span)}x{len(span)} layer grid to {out}")
    else:
        fractions = [float(f) for f in args.fractions.split(",")]
        rows = sweep_data_scale(config, ds, fractions, args.trials)
        with open(os.path.join(out, "datascale.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fraction", "mean_accuracy", "std_accuracy", "trials"])
            for r in rows:
                w.writerow([r["fraction"], repr(r["mean"]), repr(r["std"]), r["trials"]])
        print(f"wrote data-scale table ({len(rows)} fractions) to {out}")
    return 0


# -- parser -------------------------------------------------------------------

def _add_train_overrides(p) -> None:
    p.add_argument("--config", help="JSON training config; unspecified keys take defaults")
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--L", type=int, help="hypergraph layers")
    p.add_argument("--K", type=int, help="graph layers")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dshgcn", description="Dual-stream hypergraph engagement classifier")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic contagion dataset")
    p.add_argument("--students", type=int, default=6)
    p.add_argument("--snapshots", type=int, default=200)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--rho", type=float, default=0.7)
    p.add_argument("--rho-choices", help="comma list; draws rho per snapshot")
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--signal", type=float, default=0.25)
    p.add_argument("--deviation", type=float, default=1.0)
    p.add_argument("--d-e", type=int, default=512)
    p.add_argument("--d-a", type=int, default=49)
    p.add_argument("--d-u", type=int, default=34)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert a CSV of pre-extracted vectors")
    p.add_argument("--table", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train and evaluate on a held-out split")
    p.add_argument("--data", required=True)
    p.add_argument("--task", choices=sorted(TASK_CLASSES))
    p.add_argument("--out", required=True)
    _add_train_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--students", type=int, default=3)
    p.add_argument("--dh", type=int, default=8)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="layer-depth grid or training-data-scale study")
    p.add_argument("--mode", choices=("layers", "datascale"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-layers", type=int, default=6)
    p.add_argument("--fractions", default="0.2,0.4,0.6,0.8")
    p.add_argument("--trials", type=int, default=5)
    _add_train_overrides(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (DatasetError, FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: validation: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
