"""
Command-line harness: synthesize, simulate, sweep, bounds, serve
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from imopt.config import ExperimentConfig, load_config
from imopt.errors import (
    ConfigurationError,
    LmiNoConvergence,
    OracleError,
    SynthesisError,
    UnstableLoopError,
)
from imopt.experiments import (
    RunOutcome,
    bounds_pipeline,
    simulate_pipeline,
    sweep_pipeline,
    synthesize_pipeline,
    write_outcome,
)
from imopt.logger import logger, setup_logging

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_FAILURE = 3

PIPELINES: Dict[str, Callable[[ExperimentConfig], RunOutcome]] = {
    "synthesize": synthesize_pipeline,
    "simulate": simulate_pipeline,
    "sweep": sweep_pipeline,
    "bounds": bounds_pipeline,
}

REPORT_NAMES = {
    "synthesize": "synthesis.txt",
    "simulate": "summary.txt",
    "sweep": "sweep.txt",
    "bounds": "bounds.txt",
}

HELP = {
    "synthesize": "synthesize the controllers of every control entry",
    "simulate": "run every configured algorithm and write traces plus a summary",
    "sweep": "inexact-model sweep over omega_hat with the matching error bounds",
    "bounds": "loop norms, small-gain margin and tracking-error bounds",
}


class UsageParser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error status"""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog="imopt", description="Internal-model online optimization experiments")
    commands = parser.add_subparsers(dest="command", required=True)
    for verb in PIPELINES:
        sub = commands.add_parser(verb, help=HELP[verb])
        sub.add_argument("--config", required=True, help="experiment configuration (JSON)")
        sub.add_argument("--out", default=None, help="output directory (overrides the config)")
        sub.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
        sub.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    serve = commands.add_parser("serve", help="start the HTTP server")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--results-root", default=None, help="directory that receives /simulate output")
    serve.add_argument("--quiet", action="store_true")
    return parser


def exit_status(command: str, outcome: RunOutcome) -> int:
    if outcome.failed:
        return EXIT_FAILURE
    if outcome.infeasible and command in ("synthesize", "bounds"):
        return EXIT_INFEASIBLE
    return EXIT_OK


def run_command(command: str, config_path: str, out: Optional[str], seed: Optional[int]) -> int:
    try:
        cfg = load_config(config_path).with_overrides(seed=seed, output=out)
        outcome = PIPELINES[command](cfg)
        write_outcome(Path(cfg.output), outcome, REPORT_NAMES[command])
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}", exc_info=True)
        return EXIT_CONFIG
    except (LmiNoConvergence, SynthesisError, UnstableLoopError, OracleError) as e:
        logger.error(f"{command} failed: {e}", exc_info=True)
        return EXIT_FAILURE
    status = exit_status(command, outcome)
    if status == EXIT_INFEASIBLE:
        logger.warning("Synthesis infeasible: the LMIs have no solution for this model and spectral range; "
                       "consider the online gradient instead")
    return status


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(quiet=args.quiet)
    if args.command == "serve":
        import uvicorn

        from imopt.server import RESULTS_ROOT_ENV

        if args.results_root is not None:
            os.environ[RESULTS_ROOT_ENV] = args.results_root
        logger.info(f"Starting server at http://{args.host}:{args.port} (docs at /docs)")
        uvicorn.run("imopt.server:app", host=args.host, port=args.port, log_config=None)
        return EXIT_OK
    return run_command(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
