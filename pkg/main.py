#!/usr/bin/env python
"""
Command line entry point: run, validate or list numerical experiments on
nonautonomous random dynamical systems.
"""

import argparse
import sys

from definitions import DEFAULT_CONFIG
from nrds.config import load_experiment, validate
from nrds.runner import run
from scenarios.scenarios import describe_scenarios


def run_experiment(config_path=None):
    """
    Run the experiment described by a configuration file.

    Returns:
        int: 0 when all checks pass, 2 when a check fails, 1 on
            configuration or runtime errors
    """
    if config_path is None:
        raise Exception("Config path must be provided")

    try:
        config = load_experiment(config_path)

        print(f"Loaded configuration from {config_path}")
        print(f"Using scenario: {config.scenario}")
        print(f"Using etas: {', '.join(f'{eta:g}' for eta in config.etas)}")
        print(f"Using seeds: {', '.join(str(seed) for seed in config.seeds)}")
        print(f"Check suites: {', '.join(config.ordered_checks)}")
        print(f"Writing results to {config.out_dir}")

        report = run(config)
        failed = [check for check in report.checks if not check.passed]
        print(
            f"{len(report.checks) - len(failed)}/{len(report.checks)} checks passed, "
            f"status {report.status}"
        )
    except Exception as e:
        print(f"Error during processing: {e}")
        return 1

    return report.exit_code


def validate_experiment(config_path):
    """Print configuration diagnostics; 0 when the file is valid, 1 otherwise."""
    try:
        diagnostics = validate(config_path)
    except FileNotFoundError as e:
        print(f"Error during processing: {e}")
        return 1

    for diagnostic in diagnostics:
        print(diagnostic)
    if diagnostics:
        return 1
    print(f"{config_path} is valid")
    return 0


def list_scenarios():
    print(describe_scenarios())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nrds",
        description="Numerical checks for nonautonomous random dynamical systems",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run an experiment configuration")
    run_parser.add_argument(
        "config",
        nargs="?",
        default=DEFAULT_CONFIG,
        help="path of the YAML configuration",
    )

    validate_parser = commands.add_parser(
        "validate", help="validate a configuration without running it"
    )
    validate_parser.add_argument(
        "config",
        nargs="?",
        default=DEFAULT_CONFIG,
        help="path of the YAML configuration",
    )

    commands.add_parser("list", help="list the built-in scenarios")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run_experiment(args.config)
    if args.command == "validate":
        return validate_experiment(args.config)
    return list_scenarios()


if __name__ == "__main__":
    sys.exit(main())
