"""Command-line front door: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation error (bad config, missing input file),
2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, default_document
from .errors import ConfigInvalid, MissingInput
from .gradcheck import run_gradcheck

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
GRADCHECK_TOLERANCE = 1e-4

STAGE_COMMANDS = ("synth", "parse", "sessionize", "embed", "train", "eval", "run")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


class _Parser(argparse.ArgumentParser):
    # bad flags are a validation error, not argparse's default exit status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crosslog", description="Zero-label cross-system log anomaly detection.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "synth": "generate the built-in two-system synthetic corpus",
        "parse": "mine templates from the source and target logs",
        "sessionize": "group parsed events into sessions and split the target pool",
        "embed": "embed every template into the shared space",
        "train": "meta-train the detector",
        "eval": "score the held-out target sessions",
        "run": "all stages in order (synth included unless --no-synth)",
    }
    for name in STAGE_COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        p.add_argument("--out", type=Path, default=Path("runs"), help="parent of the run directory")
        p.add_argument("--seed", type=_u64, help="override train.seed")
        if name == "run":
            p.add_argument("--no-synth", action="store_true", help="use the data paths from the config")
    g = sub.add_parser("gradcheck", help="finite-difference check of every op and the task loss")
    g.add_argument("--trials", type=int, default=100)
    g.add_argument("--seed", type=_u64, default=0)
    d = sub.add_parser("init-config", help="print a complete default configuration")
    d.add_argument("--seed", type=_u64, default=0)
    return parser


def _run_stage(args) -> int:
    cfg = RunConfig.load(args.config, args.seed)
    run = cfg.run_dir(args.out)
    run.mkdir(parents=True, exist_ok=True)
    (run / "config.json").write_text(json.dumps(cfg.doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if args.command == "run":
        m = pipeline.run_all(cfg, run, synth=not args.no_synth)
        print(f"precision\trecall\tf1\ttp\tfp\ttn\tfn\n{m.report_line()}")
    elif args.command == "eval":
        m = pipeline.stage_eval(cfg, run)
        print(f"precision\trecall\tf1\ttp\tfp\ttn\tfn\n{m.report_line()}")
    elif args.command == "train":
        _, history = pipeline.stage_train(cfg, run)
        if history:
            print(history[-1].line())
    elif args.command == "sessionize":
        counts = pipeline.stage_sessionize(cfg, run)
        print(" ".join(f"{k}={v}" for k, v in counts.items()))
    elif args.command == "parse":
        print(f"templates={len(pipeline.stage_parse(cfg, run))}")
    else:
        pipeline.STAGES[args.command](cfg, run)
    print(f"run directory: {run}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gradcheck":
            worst = run_gradcheck(args.trials, args.seed)
            for name, err in worst.items():
                print(f"{name}\t{err:.3e}")
            top = max(worst.values())
            print(f"max relative error: {top:.3e}")
            return EXIT_OK if top < GRADCHECK_TOLERANCE else EXIT_RUNTIME
        if args.command == "init-config":
            print(json.dumps(default_document(args.seed), indent=2))
            return EXIT_OK
        return _run_stage(args)
    except (ConfigInvalid, MissingInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
