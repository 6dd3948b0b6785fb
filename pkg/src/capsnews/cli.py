"""Command-line front end: train, eval, predict, analyze, sweep-routing.

Exit codes: 0 success, 2 usage/input error, 3 consistency error,
1 internal error.  Logs go to stderr; artifacts (checkpoints, CSVs) go to
files under the run's output directory.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from . import pipeline
from .data import NewsExample
from .embeddings import PrecomputedStore
from .errors import (
    ConfigError,
    FormatError,
    HashMismatchError,
    SequenceTooShortError,
    UnknownIdError,
)
from .metrics import MetricsReport
from .models import load_model, predict
from .runconfig import load_run_config

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONSISTENCY = 3

_USAGE_ERRORS = (ConfigError, FormatError, UnknownIdError, SequenceTooShortError,
                 FileNotFoundError, NotADirectoryError, IsADirectoryError)


def _log(msg: str):
    print(msg, file=sys.stderr)


def _rcfg(args):
    return load_run_config(
        config_path=args.config,
        set_overrides=args.set,
        out_dir=args.out,
        seed=args.seed,
        routing_iterations=getattr(args, "routing_iterations", None),
    )


def format_report(report: MetricsReport) -> str:
    """Header row is always exactly `Acc Prec Rec F1`."""
    lines = ["Acc Prec Rec F1"]
    if report.num_classes == 2:
        pos = report.positive()
        lines.append(f"{report.accuracy:.4f} {pos.precision:.4f} "
                     f"{pos.recall:.4f} {pos.f1:.4f}")
    else:
        lines.append(f"{report.accuracy:.4f} {report.macro_precision:.4f} "
                     f"{report.macro_recall:.4f} {report.macro_f1:.4f}")
        lines.append(f"macro_f1 {report.macro_f1:.4f}")
        lines.append(f"weighted_f1 {report.weighted_f1:.4f}")
    return "\n".join(lines)


def cmd_train(args) -> int:
    pipeline.run_training(_rcfg(args), log=_log)
    return EXIT_OK


def cmd_eval(args) -> int:
    outcome = pipeline.run_eval(_rcfg(args), args.checkpoint, args.split, log=_log)
    print(format_report(outcome["report"]))
    return EXIT_OK


def cmd_predict(args) -> int:
    path = Path(args.checkpoint)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {args.checkpoint} does not exist")
    model = load_model(path)
    credit = None
    if args.credit is not None:
        values = [int(v) for v in args.credit.replace(",", " ").split()]
        if len(values) != 5:
            raise ConfigError(f"--credit needs 5 integers, got {len(values)}")
        credit = tuple(values)
    if model.config.variant == "mlp-capsnet" and credit is None:
        _log("warning: no credit history given; using zero credit slots")
        credit = (0, 0, 0, 0, 0)
    example = NewsExample(args.example_id, args.text, 0, credit_history=credit)
    if args.store is not None:
        with PrecomputedStore(args.store) as store:
            label, act = predict(model, example, store=store)
    else:
        label, act = predict(model, example)
    names = model.config.class_names
    print(names[label])
    print(" ".join(f"{n}={a:.4f}" for n, a in zip(names, act)))
    return EXIT_OK


def cmd_analyze(args) -> int:
    rcfg = _rcfg(args)
    k = args.k if args.k is not None else rcfg.analyze_k
    pipeline.run_analyze(rcfg, args.split, k, log=_log)
    return EXIT_OK


def cmd_sweep(args) -> int:
    outcome = pipeline.run_sweep(_rcfg(args), args.r_values, log=_log)
    print("r,val_metric,test_metric")
    for r, vm, tm in outcome["rows"]:
        print(f"{r},{vm!r},{tm!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="capsnews",
        description="Capsule-augmented text classifiers: train, evaluate, analyze.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value run config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, metavar="N")

    t = sub.add_parser("train", parents=[common], help="train a model")
    t.add_argument("--routing-iterations", type=int, dest="routing_iterations",
                   metavar="N")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="classify one text")
    pr.add_argument("checkpoint")
    pr.add_argument("text")
    pr.add_argument("--credit", metavar="'A B C D E'",
                    help="5 speaker credit counts for the mlp variant")
    pr.add_argument("--store", metavar="PATH",
                    help="precomputed embedding store for frozen-store models")
    pr.add_argument("--id", dest="example_id", default="cli-input",
                    help="example id (store lookups key on it)")
    pr.set_defaults(func=cmd_predict)

    a = sub.add_parser("analyze", parents=[common], help="corpus frequency/sentiment report")
    a.add_argument("--split", choices=["train", "val", "test"], default="train")
    a.add_argument("--k", type=int, default=None, help="top tokens per class (default 10)")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep-routing", parents=[common],
                       help="train once per routing iteration count")
    s.add_argument("--r-values", type=int, nargs="+", default=[1, 2, 3],
                   dest="r_values", metavar="R")
    s.set_defaults(func=cmd_sweep)
    return p


def _write_error_log(args, text: str):
    out = getattr(args, "out", None)
    if not out:
        return
    try:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "error.log").write_text(text, encoding="utf-8")
    except OSError:
        pass


def entry(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HashMismatchError as e:
        _log(f"error: {e}")
        _write_error_log(args, traceback.format_exc())
        return EXIT_CONSISTENCY
    except _USAGE_ERRORS as e:
        _log(f"error: {e}")
        _write_error_log(args, traceback.format_exc())
        return EXIT_USAGE
    except Exception as e:
        _log(f"error: {e}")
        _write_error_log(args, traceback.format_exc())
        return EXIT_INTERNAL


def main():
    sys.exit(entry())
