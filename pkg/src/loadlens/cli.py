"""``loadlens`` command line.

Every command prints one JSON document on standard output and exits with 0
on success. Failures print ``{"status": "error", ...}`` and exit with the
status of the error's category: 2 for a missing prior-stage artifact, 3 for
an invalid config, 4 for data and learning errors, 5 for I/O failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .config import MODEL_KINDS, load_config
from .errors import LoadLensError
from .pipeline import STAGES, run_all, run_stage

IO_EXIT = 5


def _common() -> argparse.ArgumentParser:
    # default=SUPPRESS lets the flags appear before or after the command
    p = argparse.ArgumentParser(add_help=False)
    s = argparse.SUPPRESS
    p.add_argument("--config", metavar="PATH", default=s, help="YAML run configuration")
    p.add_argument("--data", metavar="DIR", default=s, help="dataset root (default: <out>/data)")
    p.add_argument("--out", metavar="DIR", default=s, help="output directory")
    p.add_argument("--seed", type=int, default=s)
    p.add_argument("--threads", type=int, default=s, help="worker threads (fallback: LOADLENS_THREADS)")
    p.add_argument("--modality", choices=("pupil", "eeg"), default=s)
    p.add_argument("--task", choices=("binary", "pupil4", "eeg3", "nine"), default=s)
    p.add_argument("--model", choices=MODEL_KINDS, default=s)
    p.add_argument("--balance", choices=("none", "smote", "smote-enn", "adasyn"), default=s)
    p.add_argument("--split", choices=("epoch", "subject"), default=s)
    p.add_argument("-v", "--verbose", action="count", default=s)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="loadlens",
        description="Cognitive-load classification from pupil and EEG recordings.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "synth": "write the synthetic dataset",
        "ingest": "parse and validate the dataset",
        "epoch": "cut event-locked epochs",
        "clean": "apply artifact rejection",
        "features": "compute the feature matrix",
        "train": "split, balance and fit a model",
        "eval": "score the held-out partition and cross-validate",
        "explain": "exact tree attributions and feature ranking",
        "report": "render SVG figures and a text summary",
        "run-all": "every stage in order (synthesises data when none is given)",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    run = sub.add_parser("run", parents=[common], help="run one stage, or 'all'")
    run.add_argument("stage", choices=(*STAGES, "all"))
    return parser


_OVERRIDES = {
    "data": "data",
    "out": "out",
    "seed": "seed",
    "threads": "threads",
    "modality": "modality",
    "task": "task",
    "model": "model.kind",
    "balance": "balance.method",
    "split": "split.mode",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    verbosity = getattr(args, "verbose", 0) or 0
    logging.captureWarnings(True)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbosity, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        overrides = {key: getattr(args, attr) for attr, key in _OVERRIDES.items() if hasattr(args, attr)}
        cfg = load_config(getattr(args, "config", None), overrides)
        command = args.command
        if command == "run":
            command = "run-all" if args.stage == "all" else args.stage
        if command == "run-all":
            results = run_all(cfg)
            doc = {"status": "ok", "command": "run-all", "stages": [r.to_dict() for r in results]}
        else:
            doc = {"command": command, **run_stage(command, cfg).to_dict()}
    except LoadLensError as exc:
        _emit({"status": "error", "category": exc.category, "error": type(exc).__name__, "message": str(exc)})
        print(f"loadlens: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        _emit({"status": "error", "category": "io", "error": type(exc).__name__, "message": str(exc)})
        print(f"loadlens: {exc}", file=sys.stderr)
        return IO_EXIT
    _emit(doc)
    return 0


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True, default=str) + "\n")
    sys.stdout.flush()


if __name__ == "__main__":
    sys.exit(main())
