"""Command-line interface.

Subcommands: metrics, train, attack, simplex, table1, gendata. Every command
is deterministic given its arguments, seeds, and input files; commands that
write into an output directory also write a manifest.json recording resolved
arguments and input hashes. Report paths render a PNG figure next to each
delimited output unless --no-plot is given.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as dataio
from .attacks import robust_accuracy_curve
from .config import config_to_dict, parse_train_config
from .errors import (
    CmicError,
    ConfigError,
    DegenerateInput,
    DegenerateSeparation,
    DimensionMismatch,
    EmptyClass,
    FormatError,
    InvalidInput,
    NumericalError,
)
from .manifest import RunManifest
from .metrics import MetricsReport, metrics_report
from .nn import load_checkpoint, save_checkpoint
from .simplex import project_logits, project_probabilities
from .table1 import consistency_report
from .trainer import EvolutionLog, TrainConfig, train

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERICAL_EXIT = 3

DEFAULT_BUDGETS = "0.05,0.10,0.15,0.20,0.25,0.30,0.35"

#: Offset added to the blob seed to draw evaluation-set noise in train mode.
EVAL_SEED_OFFSET = 999983


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def parse_blob_spec(spec: str) -> dict:
    """Parse 'classes=3,per_class=100,dim=2,spread=0.1,seed=1[,...]'."""
    known = {"classes": int, "per_class": int, "dim": int, "spread": float,
             "seed": int, "radius": float, "offset": float,
             "clip01": lambda s: s.lower() in ("true", "1", "yes")}
    out = {}
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise InvalidInput(f"blob spec item {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in known:
            raise InvalidInput(f"blob spec: unknown key {key!r}")
        out[key] = known[key](raw.strip())
    for required in ("classes", "per_class", "dim", "spread", "seed"):
        if required not in out:
            raise InvalidInput(f"blob spec: missing {required!r}")
    return out


def _report_csv_lines(report: MetricsReport):
    yield ",".join(MetricsReport.FIELDS)
    yield ",".join(_fmt(getattr(report, f)) for f in MetricsReport.FIELDS)


def _report_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict())


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def cmd_metrics(args) -> int:
    probs, labels = dataio.load_probmatrix_csv(args.probs_csv)
    report = metrics_report(probs, labels)
    if args.csv:
        text = "\n".join(_report_csv_lines(report))
    else:
        text = _report_json(report)
    if args.out:
        _write_text(args.out, text)
    else:
        print(text)
    return 0


def _load_train_datasets(args):
    if args.blobs:
        spec = parse_blob_spec(args.blobs)
        train_set = dataio.gen_blobs(**spec)
        eval_spec = dict(spec, seed=spec["seed"] + EVAL_SEED_OFFSET)
        eval_set = dataio.gen_blobs(**eval_spec)
        inputs = []
    else:
        train_set = dataio.load_dataset_csv(args.train_csv)
        eval_set = dataio.load_dataset_csv(args.eval_csv)
        c = max(train_set.class_count, eval_set.class_count)
        train_set = dataio.Dataset(train_set.features, train_set.labels, c)
        eval_set = dataio.Dataset(eval_set.features, eval_set.labels, c)
        inputs = [args.train_csv, args.eval_csv]
    return train_set, eval_set, inputs


def cmd_train(args) -> int:
    config = parse_train_config(args.config) if args.config else TrainConfig().validate()
    train_set, eval_set, input_paths = _load_train_datasets(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves_path = out_dir / "curves.csv"
    checkpoint_path = out_dir / "checkpoint.json"

    manifest = RunManifest(
        command="train",
        arguments={"config": config_to_dict(config), "blobs": args.blobs,
                   "train_csv": args.train_csv, "eval_csv": args.eval_csv},
        seed=config.seed,
    )
    if args.config:
        manifest.add_input(args.config)
    for path in input_paths:
        manifest.add_input(path)

    with open(curves_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(EvolutionLog.csv_header() + "\n")
        fh.flush()

        def flush_record(record):
            fh.write(EvolutionLog.csv_row(record) + "\n")
            fh.flush()
            print(f"epoch {record.epoch}: loss={record.train_loss:.6f} "
                  f"cmi={record.cmi:.6f} gamma={record.gamma:.6f} "
                  f"eps_top1={record.eps_top1:.4f}")

        result = train(train_set, eval_set, config, on_epoch=flush_record)

    save_checkpoint(checkpoint_path, result.model, result.opt_state,
                    epoch=config.epochs)
    curves_json = out_dir / "curves.json"
    _write_text(curves_json, json.dumps(result.log.to_jsonable()))
    manifest.add_output(curves_path)
    manifest.add_output(curves_json)
    manifest.add_output(checkpoint_path)
    if not args.no_plot:
        from .plotting import save_evolution_figure
        figure_path = out_dir / "curves.png"
        save_evolution_figure(result.log.records, figure_path)
        manifest.add_output(figure_path)
    manifest.write(out_dir / "manifest.json")
    final = result.log.records[-1]
    print(f"done: final eps_top1={final.eps_top1:.4f} "
          f"ncmi={'nan' if final.ncmi is None else f'{final.ncmi:.6f}'}")
    return 0


def _load_attack_dataset(args):
    if args.blobs:
        spec = parse_blob_spec(args.blobs)
        spec.setdefault("clip01", True)
        return dataio.gen_blobs(**spec), []
    if args.idx_images:
        return dataio.load_idx(args.idx_images, args.idx_labels), \
            [args.idx_images, args.idx_labels]
    return dataio.load_dataset_csv(args.data_csv), [args.data_csv]


def cmd_attack(args) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    dataset, input_paths = _load_attack_dataset(args)
    budgets = [float(b) for b in args.budgets.split(",") if b.strip()]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    clean = robust_accuracy_curve(model, dataset, [0.0], attack=args.attack,
                                  iterations=args.iterations, seed=args.seed)
    print(f"clean accuracy: {clean[0][1]:.6f}")
    curve = robust_accuracy_curve(model, dataset, budgets, attack=args.attack,
                                  iterations=args.iterations, seed=args.seed)
    lines = ["budget,accuracy"]
    for budget, acc in curve:
        lines.append(f"{_fmt(budget)},{_fmt(acc)}")
        print(lines[-1])
    csv_path = out_dir / "robust_accuracy.csv"
    _write_text(csv_path, "\n".join(lines))

    manifest = RunManifest(
        command="attack",
        arguments={"checkpoint": args.checkpoint, "attack": args.attack,
                   "budgets": budgets, "iterations": args.iterations,
                   "blobs": args.blobs, "data_csv": args.data_csv,
                   "idx_images": args.idx_images, "idx_labels": args.idx_labels},
        seed=args.seed,
    )
    manifest.add_input(args.checkpoint)
    for path in input_paths:
        manifest.add_input(path)
    manifest.add_output(csv_path)
    if not args.no_plot:
        from .plotting import save_robustness_figure
        figure_path = out_dir / "robust_accuracy.png"
        save_robustness_figure({args.attack: curve}, figure_path)
        manifest.add_output(figure_path)
    manifest.write(out_dir / "manifest.json")
    return 0


def cmd_simplex(args) -> int:
    classes = [int(c) for c in args.classes.split(",")]
    if args.checkpoint:
        model, _, _ = load_checkpoint(args.checkpoint)
        dataset = dataio.load_dataset_csv(args.data_csv)
        points = project_logits(model.forward(dataset.features), classes)
        labels = dataset.labels
        inputs = [args.checkpoint, args.data_csv]
    else:
        probs, all_labels = dataio.load_probmatrix_csv(args.probs_csv)
        points, kept = project_probabilities(probs, classes)
        labels = all_labels[kept]
        skipped = int((~kept).sum())
        if skipped:
            print(f"warning: skipped {skipped} rows with zero mass on classes "
                  f"{classes}", file=sys.stderr)
        inputs = [args.probs_csv]

    lines = ["label,u,v"]
    for y, (u, v) in zip(labels, points):
        lines.append(f"{int(y)},{_fmt(u)},{_fmt(v)}")
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_text(out_path, "\n".join(lines))

    manifest = RunManifest(
        command="simplex",
        arguments={"classes": classes, "probs_csv": args.probs_csv,
                   "checkpoint": args.checkpoint, "data_csv": args.data_csv},
    )
    for path in inputs:
        manifest.add_input(path)
    manifest.add_output(out_path)
    if not args.no_plot:
        from .plotting import save_simplex_figure
        figure_path = out_path.with_suffix(".png")
        save_simplex_figure(points, labels, classes, figure_path)
        manifest.add_output(figure_path)
    manifest.write(out_path.with_name(out_path.stem + ".manifest.json"))
    return 0


def cmd_table1(args) -> int:
    report = consistency_report()
    if args.json:
        doc = {
            "rows": [{"model": r.model, "cmi": r.cmi, "gamma": r.gamma,
                      "ncmi_published": r.ncmi_published,
                      "ncmi_recomputed": r.ncmi_recomputed,
                      "discrepancy": r.discrepancy,
                      "top1_error": r.top1_error} for r in report.rows],
            "max_discrepancy": report.max_discrepancy,
            "pearson_published": report.pearson_published,
            "pearson_recomputed": report.pearson_recomputed,
        }
        print(json.dumps(doc, indent=2))
    else:
        print(f"{'model':22s} {'cmi':>7s} {'gamma':>7s} {'ncmi':>7s} "
              f"{'cmi/gamma':>10s} {'diff':>9s} {'top1_err':>9s}")
        for r in report.rows:
            print(f"{r.model:22s} {r.cmi:7.3f} {r.gamma:7.3f} "
                  f"{r.ncmi_published:7.3f} {r.ncmi_recomputed:10.6f} "
                  f"{r.discrepancy:9.6f} {r.top1_error:9.3f}")
        print(f"max discrepancy vs published ncmi: {report.max_discrepancy:.6f}")
        print(f"pearson(ncmi published, top-1 error) = {report.pearson_published:.6f}")
        print(f"pearson(cmi/gamma,      top-1 error) = {report.pearson_recomputed:.6f}")

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = ["model,cmi,gamma,ncmi_published,ncmi_recomputed,discrepancy,top1_error"]
        for r in report.rows:
            lines.append(",".join([r.model, _fmt(r.cmi), _fmt(r.gamma),
                                   _fmt(r.ncmi_published), _fmt(r.ncmi_recomputed),
                                   _fmt(r.discrepancy), _fmt(r.top1_error)]))
        csv_path = out_dir / "table1.csv"
        _write_text(csv_path, "\n".join(lines))
        manifest = RunManifest(command="table1", arguments={"bundled": True})
        manifest.add_output(csv_path)
        if not args.no_plot:
            from .plotting import save_correlation_figure
            figure_path = out_dir / "table1.png"
            save_correlation_figure(
                [r.ncmi_published for r in report.rows],
                [r.top1_error for r in report.rows],
                [r.model for r in report.rows], figure_path)
            manifest.add_output(figure_path)
        manifest.write(out_dir / "manifest.json")
    return 0


def cmd_gendata(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="gendata",
                           arguments={"blobs": args.blobs, "fixture": args.fixture})
    if args.blobs:
        spec = parse_blob_spec(args.blobs)
        dataset = dataio.gen_blobs(**spec)
        path = out_dir / "blobs.csv"
        dataio.save_dataset_csv(path, dataset)
        manifest.seed = spec["seed"]
        manifest.add_output(path)
    elif args.fixture == "ln2-cmi":
        # two rows of one class at opposite vertices: centroid (0.5, 0.5),
        # mean KL to it = ln 2
        path = out_dir / "ln2-cmi.csv"
        dataio.save_probmatrix_csv(path, np.array([[1.0, 0.0], [0.0, 1.0]]),
                                   np.array([0, 0]))
        manifest.add_output(path)
    elif args.fixture == "idx-mini":
        images = out_dir / "idx-mini-images.idx"
        labels = out_dir / "idx-mini-labels.idx"
        dataio.save_idx(images, labels, np.array([[1.0]]), np.array([7]),
                        rows=1, cols=1)
        manifest.add_output(images)
        manifest.add_output(labels)
    else:
        raise InvalidInput(f"unknown fixture {args.fixture!r}")
    manifest.write(out_dir / "manifest.json")
    for path in sorted(manifest.outputs):
        print(path)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cmic",
                     description="Concentration/separation metrics and "
                                 "constrained training for classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="score a probability-matrix CSV")
    p.add_argument("probs_csv")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", default=True)
    fmt.add_argument("--csv", action="store_true")
    p.add_argument("--out", default=None, help="write to file instead of stdout")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("train", help="run a training experiment")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--blobs", default=None,
                     help="e.g. classes=3,per_class=100,dim=2,spread=0.1,seed=1")
    src.add_argument("--train-csv", default=None)
    p.add_argument("--eval-csv", default=None,
                   help="required with --train-csv")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="robust-accuracy curve for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data-csv", default=None)
    src.add_argument("--blobs", default=None)
    src.add_argument("--idx-images", default=None)
    p.add_argument("--idx-labels", default=None)
    p.add_argument("--attack", choices=("fgsm", "pgd"), default="fgsm")
    p.add_argument("--budgets", default=DEFAULT_BUDGETS)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("simplex", help="project 3 classes onto the 2-D simplex")
    p.add_argument("probs_csv", nargs="?", default=None)
    p.add_argument("--checkpoint", default=None,
                   help="take the logits path through a checkpoint instead")
    p.add_argument("--data-csv", default=None, help="features for --checkpoint")
    p.add_argument("--classes", required=True, help="three indices, e.g. 0,3,7")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_simplex)

    p = sub.add_parser("table1", help="bundled pretrained-model consistency report")
    p.add_argument("--bundled", action="store_true", default=True,
                   help="use the bundled constants (the only mode)")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None, help="also write CSV/figure here")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("gendata", help="generate datasets and fixtures")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--blobs", default=None)
    src.add_argument("--fixture", choices=("ln2-cmi", "idx-mini"), default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gendata)
    return parser


def _validate_arg_combinations(args) -> None:
    if args.command == "train" and args.train_csv and not args.eval_csv:
        raise _UsageError("--train-csv requires --eval-csv")
    if args.command == "simplex":
        if args.checkpoint and not args.data_csv:
            raise _UsageError("--checkpoint requires --data-csv")
        if not args.checkpoint and not args.probs_csv:
            raise _UsageError("either a probability CSV or --checkpoint is required")
    if args.command == "attack" and args.idx_images and not args.idx_labels:
        raise _UsageError("--idx-images requires --idx-labels")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate_arg_combinations(args)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (NumericalError, DegenerateSeparation) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT
    except (FormatError, EmptyClass, DimensionMismatch, InvalidInput,
            ConfigError, DegenerateInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except CmicError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
