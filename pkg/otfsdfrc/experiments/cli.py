"""Command line entry point: ``otfs-dfrc <experiment> --config FILE --out DIR``.

Exit codes: 0 on success, 1 when a run fails, 2 when the configuration is
invalid.
"""

import argparse
import sys
from pathlib import Path

from dotenv import load_dotenv
from loguru import logger
from tabulate import tabulate

from .. import __version__
from ..diagnostics import reset_collector
from ..errors import ConfigValidationError, ExperimentError
from ..utils import setup_logger
from .config import load_config
from .runner import EXPERIMENTS, run_experiment

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG_INVALID = 2

DESCRIPTIONS = {
    "optimize": "Solve one weighted design and write it with its trace",
    "region": "Sweep eta and compare the optimized frontier with baseline patterns",
    "af": "Empirical ambiguity-function slices of designs over an eta grid",
    "ber": "Monte Carlo bit error rate of the optimized and baseline designs",
    "check": "Validate a configuration and its placement guard without running",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otfs-dfrc",
        description="OTFS dual-functional radar-communication waveform design experiments",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub = subparsers.add_parser(name, help=DESCRIPTIONS[name])
        sub.add_argument("--config", "-c", type=Path, required=True, help="Experiment YAML document")
        sub.add_argument(
            "--out", "-o", type=Path, default=None, help="Output directory (default: runs/<experiment>)"
        )
        sub.add_argument("--seed", type=int, default=None, help="Override the configured seed")
        sub.add_argument(
            "--workers", type=int, default=None, help="Process-pool size for sweeps and Monte Carlo"
        )
        sub.add_argument(
            "--verbose", "-v", action="count", default=None,
            help="Increase verbosity (-v info, -vv debug, -vvv trace)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    out_dir = args.out or Path("runs") / args.command
    setup_logger(args.verbose, log_dir=str(out_dir))
    reset_collector()

    try:
        config = load_config(
            args.config, overrides={"experiment": args.command, "seed": args.seed, "workers": args.workers}
        )
    except ConfigValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_INVALID
    except OSError as e:
        print(f"error: cannot read {args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG_INVALID

    try:
        run = run_experiment(config, out_dir, workers=args.workers)
    except ExperimentError as e:
        print(f"error: {e}", file=sys.stderr)
        logger.info(f"Diagnostics written to {out_dir / 'diagnostics.json'}")
        return EXIT_RUN_FAILED

    if run.summary:
        print(tabulate(run.summary, headers="keys", floatfmt=".4g"))
    print(f"\n{len(run.artifacts)} artifact(s) written to {out_dir}")
    return EXIT_OK if run.success else EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
