"""Command-line entry point.

    mstkd <subcommand> --config <path> [--force] [--seed-override N] [--out DIR]

Subcommands: gen-data, train-teachers, extract, train-adaptor,
train-student, evaluate, report (takes evaluated run directories as
positional arguments), run-all, and init-config (writes the default
config). MSTKD_WORKERS caps parallel teacher-training workers.

Exit codes: 0 success, 2 config error, 3 data/format error, 4 divergence,
5 missing upstream artifact, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .errors import (ConfigError, DataError, DivergenceError, FormatError,
                     MissingArtifactError, MstkdError)

EXIT_CODES = [
    (ConfigError, 2),
    (DataError, 3),
    (FormatError, 3),
    (DivergenceError, 4),
    (MissingArtifactError, 5),
]

_STAGE_COMMANDS = {
    "gen-data": pipeline.cmd_gen_data,
    "train-teachers": pipeline.cmd_train_teachers,
    "extract": pipeline.cmd_extract,
    "train-adaptor": pipeline.cmd_train_adaptor,
    "train-student": pipeline.cmd_train_student,
    "evaluate": pipeline.cmd_evaluate,
    "run-all": pipeline.run_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mstkd",
        description="Multi-specialized-teacher distillation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_force=True):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed-override", type=int, default=None, metavar="N",
                       help="replace seeds with (N, N+1, N+2)")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="override the config's output directory")
        if with_force:
            p.add_argument("--force", action="store_true",
                           help="re-run even when artifacts are up to date")

    for name in _STAGE_COMMANDS:
        add_common(sub.add_parser(name))
    report = sub.add_parser("report")
    add_common(report, with_force=False)
    report.add_argument("runs", nargs="+", metavar="RUN_DIR",
                        help="evaluated run directories to combine")
    init = sub.add_parser("init-config",
                          help="write the desk-scale default config")
    init.add_argument("--out", default="mstkd-config.json", metavar="PATH")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "init-config":
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(pipeline.default_config_dict(), fh, indent=2,
                          sort_keys=True)
                fh.write("\n")
            print(f"[mstkd] wrote default config to {args.out}")
            return 0
        cfg = pipeline.load_config(args.config, args.seed_override, args.out)
        if args.command == "report":
            pipeline.cmd_report(cfg, args.runs, args.out)
        else:
            _STAGE_COMMANDS[args.command](cfg, args.force)
        return 0
    except MstkdError as exc:
        print(f"[mstkd] error: {exc}", file=sys.stderr)
        for klass, code in EXIT_CODES:
            if isinstance(exc, klass):
                return code
        return 1


if __name__ == "__main__":
    sys.exit(main())
