# igsf/cli.py
"""
Command-line entry point: `python -m igsf {run,compare,print-config} [flags]`.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 internal error.
Errors are printed to stderr as {"status": "error", "error_code", "message", "details"}.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

# Load .env BEFORE any igsf imports (they read env vars at import time)
from dotenv import load_dotenv
load_dotenv(override=True)

from igsf.config import parse_config, serialize_config
from igsf.errors import E_INTERNAL, ConfigError, IgsfError, NumericalError, ParameterError
from igsf.monitoring import logger
from igsf.orchestrator import ExperimentOrchestrator
from igsf.schemas import Config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_INTERNAL = 3


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="igsf",
        description="Run the filter-bank benchmarks and write RMSE tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run every configured filter and write per-filter CSV files"),
        ("compare", "run, then write summary.csv with time-averaged RMSE and win-rates"),
        ("print-config", "print the fully resolved configuration"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", dest="config_path", type=Path, help="JSON run configuration")
        p.add_argument("--experiment", help="named experiment when no config file is given")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--out", dest="out_dir")
        p.add_argument("--filter", dest="filters", action="append",
                       help="filter label or kind; repeatable")
        p.add_argument("--workers", type=int)
    return parser.parse_args(argv)


def load_config(args: argparse.Namespace) -> Config:
    text = ""
    if args.config_path is not None:
        try:
            text = args.config_path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e.strerror}", "config",
                              {"path": str(args.config_path)})
    overrides = {
        "experiment": args.experiment,
        "seed": args.seed,
        "runs": args.runs,
        "out_dir": args.out_dir,
        "filters": args.filters,
        "workers": args.workers,
    }
    return parse_config(text, overrides)


def _fail(err: IgsfError, code: int) -> int:
    sys.stderr.write(json.dumps(err.to_dict(), sort_keys=True, default=str) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    try:
        config = load_config(args)
    except (ConfigError, ParameterError) as e:
        return _fail(e, EXIT_CONFIG)

    if args.command == "print-config":
        sys.stdout.write(serialize_config(config))
        return EXIT_OK

    orchestrator = ExperimentOrchestrator(config)
    try:
        if args.command == "compare":
            orchestrator.compare()
        else:
            orchestrator.main_run()
    except NumericalError as e:
        logger.error("Numerical failure", extra={"experiment": config.experiment, **e.to_dict()["details"]})
        return _fail(e, EXIT_NUMERICAL)
    except (ConfigError, ParameterError) as e:
        return _fail(e, EXIT_CONFIG)
    except Exception as e:
        logger.exception("Unexpected failure", extra={"experiment": config.experiment})
        if isinstance(e, IgsfError):
            return _fail(e, EXIT_INTERNAL)
        return _fail(IgsfError(str(e) or type(e).__name__, {"type": type(e).__name__}, code=E_INTERNAL),
                     EXIT_INTERNAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
