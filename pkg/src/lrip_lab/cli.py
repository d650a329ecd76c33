"""Command-line entry point: ``lrip-lab <experiment> --config <path> [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure,
4 unwritable output path.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, InputError, NumericError
from .harness import EXPERIMENTS, ExperimentConfig, run, write_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_OUTPUT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrip-lab",
        description="Run certification, decoding, and concentration experiments "
        "for instance-optimal decoding under a lower restricted isometry property.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="experiment to run")
    parser.add_argument("--config", required=True, help="path to a JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg_dict = ExperimentConfig.from_json_file(args.config).to_dict()
        cfg_dict["experiment"] = args.experiment
        if args.seed is not None:
            cfg_dict["master_seed"] = args.seed
        if args.out is not None:
            cfg_dict.setdefault("output", {})["dir"] = args.out
        config = ExperimentConfig.from_dict(cfg_dict)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run(config)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    out_dir = config.output.get("dir")
    if out_dir:
        try:
            paths = write_report(report, out_dir, config.output.get("series", []))
        except OSError as exc:
            print(f"unwritable output path: {exc}", file=sys.stderr)
            return EXIT_OUTPUT
        print(f"wrote {paths['report']}")
    else:
        print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
