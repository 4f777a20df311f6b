from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from loguru import logger

from cmclab.commands import COMMANDS
from cmclab.constants import (
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_FAILURE,
    THREADS_ENV_VAR,
    Command,
)
from cmclab.utils.exceptions import NumericalFailure, PreconditionError, RunConfigException
from cmclab.utils.run_config import load_run_config


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        required=True,
        help="Run config (JSON or YAML) or the name of a bundled config",
    )
    common.add_argument("--out", default=None, help="Output directory, overrides output_dir of the config")
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"Worker threads for grid integration ({THREADS_ENV_VAR} takes precedence)",
    )
    common.add_argument(
        "--tolerance",
        type=float,
        default=None,
        help="Pass threshold of the command, overrides the config thresholds",
    )
    common.add_argument("--log-file", default=None, help="Additional log file with debug output")

    parser = argparse.ArgumentParser(
        prog="cmclab",
        description="Rank-one CMC surfaces in hyperbolic space: flatness, frames, geometry, monodromy and stability",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        Command.FLATNESS: "Sample the flatness residual of the seed connection",
        Command.SURFACE: "Integrate the frames and export the surface with its geometry",
        Command.MONODROMY: "Holonomy of a loop and its unitarity",
        Command.JACOBI: "Jacobi potentials and Dirichlet mode spectra",
        Command.AA_COMPARE: "Rebuild a surface from Gauss-map data",
    }
    for command, description in descriptions.items():
        subparsers.add_parser(command.value, parents=[common], help=description, description=description)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``cmclab`` command.

    Returns:
        int: 0 on success, 1 on numerical failure or a failed criterion, 2 on config or input errors
    """
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config)
        logger.remove()
        logger.add(sys.stderr, level=config.verbosity.upper())

        command = COMMANDS[Command(args.command)](
            config,
            threads=args.threads,
            tolerance=args.tolerance,
        )
        return command.run(output_folder=args.out, log_file=args.log_file)
    except (RunConfigException, PreconditionError, FileNotFoundError) as e:
        logger.error(f"{e.__class__.__name__}: {e}")
        return EXIT_CONFIG_ERROR
    except NumericalFailure as e:
        logger.error(f"{e.__class__.__name__}: {e}")
        return EXIT_NUMERICAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
