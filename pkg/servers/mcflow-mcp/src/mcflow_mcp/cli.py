"""
mcflow - batch driver for flow experiments.

Usage:
    mcflow run configs/acceptance/kernel_identity.yaml
    mcflow verify configs/acceptance --jobs 4
    mcflow sweep configs/acceptance/scaling.yaml --param solver.dt=0.01,0.005

Exit codes: 0 success, 1 criterion failure, 2 config error, 3 runtime error.
"""

import argparse
import logging
import sys

import yaml

from .config import apply_override, log_level, parse_config, read_config_data
from .errors import ConfigInvalid, McflowError
from .experiment import SuiteResult, run_experiment, sweep, verify_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcflow",
        description="Graphical mean curvature flow with transport: experiments and acceptance checks",
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    run = verbs.add_parser("run", help="Run one configuration")
    run.add_argument("config", help="YAML run configuration")
    run.add_argument("--output", help="Output directory (default $MCFLOW_OUTPUT_ROOT/<name>)")
    run.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a dotted configuration key (repeatable)",
    )

    verify = verbs.add_parser("verify", help="Run every configuration in a directory")
    verify.add_argument("directory", help="Directory of YAML run configurations")
    verify.add_argument("--jobs", type=int, help="Worker processes (default $MCFLOW_JOBS or 1)")
    verify.add_argument("--output", help="Output root for the suite")

    sweep_ = verbs.add_parser("sweep", help="Run a configuration over parameter values")
    sweep_.add_argument("config", help="YAML run configuration")
    sweep_.add_argument(
        "--param",
        action="append",
        required=True,
        metavar="KEY=V1,V2",
        help="Dotted key and comma-separated values (repeatable; cartesian product)",
    )
    sweep_.add_argument("--jobs", type=int, help="Worker processes (default $MCFLOW_JOBS or 1)")
    sweep_.add_argument("--output", help="Output root for the sweep")
    return parser


def _print_suite(suite: SuiteResult) -> None:
    for line in suite.lines():
        print(line)
    print(f"{suite.criteria_checked} criteria checked")


def _run(args) -> int:
    data = read_config_data(args.config)
    for item in args.set:
        if "=" not in item:
            raise ConfigInvalid(f"Override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        data = apply_override(data, key.strip(), yaml.safe_load(raw))
    cfg = parse_config(data, args.config)
    result = run_experiment(cfg, args.output)
    for line in (r.line() for r in result.results):
        print(line)
    for message in result.errors:
        print(f"ERROR {message}")
    print(f"Artifacts in {result.output_dir}")
    return result.exit_code


def _verify(args) -> int:
    suite = verify_suite(args.directory, args.jobs, args.output)
    _print_suite(suite)
    return suite.exit_code


def _sweep(args) -> int:
    suite = sweep(args.config, args.param, args.jobs, args.output)
    _print_suite(suite)
    return suite.exit_code


VERBS = {"run": _run, "verify": _verify, "sweep": _sweep}


def main(argv: list[str] | None = None) -> int:
    """Entry point of the ``mcflow`` script; returns the process exit code."""
    logging.basicConfig(
        level=getattr(logging, log_level(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        return VERBS[args.verb](args)
    except ConfigInvalid as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"CONFIG ERROR {e}", file=sys.stderr)
        return EXIT_CONFIG
    except McflowError as e:
        logger.error(f"Experiment error: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error("Unexpected error: %s", e, exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
