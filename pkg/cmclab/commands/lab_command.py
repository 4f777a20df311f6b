from __future__ import annotations

import os
import sys
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional

from loguru import logger
from rich.console import Console
from rich.table import Table

from cmclab.constants import (
    EXIT_NUMERICAL_FAILURE,
    EXIT_SUCCESS,
    OUTPUT_FILES,
    THREADS_ENV_VAR,
    Command,
)
from cmclab.utils.data_handling import RunSetup, publish_outputs, write_json
from cmclab.utils.exceptions import RunConfigException
from cmclab.utils.run_config import RunConfig

# Remove the default logger and add one with level INFO
logger.remove()
logger.add(
    sys.stderr,
    level="INFO",
)


def resolve_threads(threads: Optional[int] = None) -> int:
    """Number of worker threads; the ``CMC_THREADS`` environment variable wins over the argument.

    Raises:
        RunConfigException: If the value is not a positive integer
    """
    value = os.environ.get(THREADS_ENV_VAR)
    if value is not None:
        try:
            threads = int(value)
        except ValueError:
            raise RunConfigException(f"{THREADS_ENV_VAR} must be an integer, got {value!r}")
    threads = 1 if threads is None else threads
    if threads < 1:
        raise RunConfigException(f"Thread count must be positive, got {threads}")
    return threads


class LabCommand(ABC):
    """
    This class serves as the basis for all cmclab commands. It stages outputs in a temporary folder, publishes them atomically and maps the outcome to an exit code.
    """

    command: Command

    def __init__(
        self,
        config: RunConfig,
        threads: Optional[int] = None,
        tolerance: Optional[float] = None,
    ):
        self.config = config
        self.threads = resolve_threads(threads)
        # command specific pass threshold, overrides the config value
        self.tolerance = tolerance
        self._check_config()

        logger.info(f"Instantiated {self.__class__.__name__} with {self.threads} thread(s)")

    def _check_config(self) -> None:
        """
        Check that the config carries the blocks this command needs.
        """
        pass

    @abstractmethod
    def _execute(self, staging_folder: Path) -> dict:
        """
        Run the computation, write the data files into the staging folder and return the report.
        """
        pass

    @abstractmethod
    def _passed(self, report: dict) -> bool:
        """
        Decide the pass criterion of the command from its report.
        """
        pass

    @property
    def report_name(self) -> str:
        return [name for name in OUTPUT_FILES[self.command] if name.endswith(".json")][0]

    def _summary_rows(self, report: dict) -> list[tuple[str, str]]:
        rows = []
        for key, value in sorted(report.items()):
            if isinstance(value, (dict, list)):
                continue
            rows.append((key, f"{value:.6g}" if isinstance(value, float) else str(value)))
        return rows

    def _print_summary(self, report: dict) -> None:
        table = Table(title=f"cmclab {self.command.value}")
        table.add_column("Quantity", style="cyan")
        table.add_column("Value")
        for key, value in self._summary_rows(report):
            table.add_row(key, value)
        Console(stderr=True).print(table)

    def run(
        self,
        output_folder: Optional[Path | str] = None,
        log_file: Optional[Path | str] = None,
    ) -> int:
        """Run the command and publish its outputs.

        Args:
            output_folder (Optional[Path | str], optional): Destination folder. Defaults to the config's output_dir.
            log_file (Optional[Path | str], optional): Log file with extra information. Defaults to None.

        Raises:
            NumericalFailure: If the computation fails
            PreconditionError: If the input data violates a precondition

        Returns:
            int: 0 if the pass criterion holds, 1 otherwise
        """
        output_folder = Path(output_folder or self.config.output_dir)
        with RunSetup(log_file=log_file) as staging_folder:
            logger.info(f"Running {self.command.value}")
            report = self._execute(staging_folder)
            passed = self._passed(report)
            report["passed"] = passed
            write_json(staging_folder / self.report_name, report)
            published = publish_outputs(staging_folder, output_folder)
            logger.info(f"Saved {len(published)} file(s) to: {output_folder.absolute()}")

        self._print_summary(report)
        if not passed:
            logger.warning(f"{self.command.value} did not meet its pass criterion")
            return EXIT_NUMERICAL_FAILURE
        return EXIT_SUCCESS
