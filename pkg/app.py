"""
PhysioPred - performance prediction from ocular and cardiac signals.

Main entry point for the command-line application.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 held-out data read during training.
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from cli.commands import COMMANDS
from core import __version__
from core.config import load_config
from core.errors import ConfigError, PipelineError

logger = logging.getLogger("physiopred")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="physiopred", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON pipeline configuration")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--jobs", type=int, help="parallel workers")
    parser.add_argument("--out", help="output directory (default: $PHYSIOPRED_OUTPUT_ROOT or ./out)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthgen", help="generate a synthetic cohort")
    p.add_argument("--spec", help="JSON synthetic spec (the config's 'synth' section)")

    p = sub.add_parser("extract", help="extract feature tables from session manifests")
    p.add_argument("manifest_dir")

    p = sub.add_parser("stats", help="statistical filtering of features")
    p.add_argument("feature_dir")
    p.add_argument("--modality", choices=["ocular", "cardiac"])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--qq", nargs="*", metavar="FEATURE", help="write Q-Q tables (default: every feature)")

    p = sub.add_parser("train", help="fit one model on all participants")
    p.add_argument("feature_dir")
    p.add_argument("--modality", choices=["ocular", "cardiac"])

    p = sub.add_parser("evaluate", help="leave-one-subject-out evaluation")
    p.add_argument("feature_dir")
    p.add_argument("--excel", action="store_true", help="also write report.xlsx")

    p = sub.add_parser("ablate", help="ocular-component, consensus or learner ablation")
    p.add_argument("feature_dir")
    p.add_argument("--which", choices=["ocular-modules", "consensus", "models"], default="ocular-modules")

    p = sub.add_parser("trends", help="per-phase group trends")
    p.add_argument("feature_dir")
    p.add_argument("--modality", choices=["ocular", "cardiac"])
    p.add_argument("--features", nargs="+", help="features to report (default: all)")
    p.add_argument("--svg", action="store_true", help="also write trend and raincloud SVGs per feature")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)

    try:
        config = load_config(args.config, seed=args.seed, jobs=args.jobs)
    except ConfigError as exc:
        logger.error("%s", exc)
        return ConfigError.exit_code

    try:
        paths = COMMANDS[args.command](args, config)
    except PipelineError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        logger.error("%s", exc)
        return 3

    for path in paths:
        logger.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
