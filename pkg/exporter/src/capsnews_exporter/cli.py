"""Command line front end: export and verify.

Exit codes follow the classifier's convention: 0 success, 2 usage or input
error, 3 consistency failure (a store that does not verify), 1 internal.
"""

import argparse
import sys

from .export import DATASET_KINDS, ExportError, ExportJob, export, verify

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONSISTENCY = 3


def _log(msg):
    print(msg, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="capsnews-export",
                                  description="Write frozen transformer embeddings "
                                              "as XSEQ stores")
    sub = top.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("export", help="embed one dataset split into a store")
    ex.add_argument("--model", required=True,
                    help="checkpoint name or local model directory")
    ex.add_argument("--dataset", required=True)
    ex.add_argument("--kind", required=True, choices=DATASET_KINDS)
    ex.add_argument("--split", required=True)
    ex.add_argument("--out", required=True, help="store file to write")
    ex.add_argument("--max-len", type=int, default=64)
    ex.add_argument("--batch-size", type=int, default=16)

    ve = sub.add_parser("verify", help="check a store against its dataset split")
    ve.add_argument("--store", required=True)
    ve.add_argument("--dataset", required=True)
    ve.add_argument("--kind", required=True, choices=DATASET_KINDS)
    ve.add_argument("--split", required=True)
    ve.add_argument("--max-len", type=int, default=None,
                    help="record length bound; defaults to the manifest value")
    return top


def cmd_export(args) -> int:
    job = ExportJob(model_id=args.model, dataset_path=args.dataset,
                    dataset_kind=args.kind, split=args.split, store_path=args.out,
                    max_len=args.max_len, batch_size=args.batch_size)
    report = export(job, log=_log)
    print(f"wrote {report.examples} records ({report.dim}-d) to {report.store_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify(args.store, args.dataset, args.kind, args.split, args.max_len)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_CONSISTENCY


def entry(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            return cmd_export(args)
        return cmd_verify(args)
    except (ExportError, FileNotFoundError, NotADirectoryError, IsADirectoryError,
            OSError) as e:
        # OSError covers an unloadable model directory
        _log(f"error: {e}")
        return EXIT_USAGE
    except Exception as e:
        _log(f"error: {e}")
        return EXIT_INTERNAL


def main():
    sys.exit(entry())


if __name__ == "__main__":
    main()
