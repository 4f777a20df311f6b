from __future__ import annotations

import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Generator, Optional, Sequence

import numpy as np
from loguru import logger


def remove_tmp_folder(folder: Path):
    """Remove the staging folder of a run, warning instead of raising when it cannot be removed.

    Args:
        folder (Path): Staging folder of the run
    """
    try:
        shutil.rmtree(folder)
    except PermissionError as e:
        logger.warning(f"Could not remove staging folder {folder}: {e}")
    except FileNotFoundError:
        logger.debug(f"Staging folder {folder} is already gone")


def add_log_file_handler(log_file: Path | str) -> int:
    """
    Mirror the run log into a file at DEBUG level, including step-control and grid diagnostics.

    Args:
        log_file (Path | str): Log file of the run, parent folders are created

    Returns:
        int: The sink id, removed again when the run ends
    """
    log_file = Path(log_file)
    log_file.parent.mkdir(parents=True, exist_ok=True)
    sink_id = logger.add(log_file, level="DEBUG", catch=True)
    logger.info(f"Writing the run log with debug diagnostics to: {log_file.absolute()}")
    return sink_id


def atomic_write_text(path: Path | str, text: str) -> Path:
    """Write text to a temporary sibling file and move it into place.

    Args:
        path (Path | str): Destination
        text (str): File content

    Returns:
        Path: The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(path: Path | str, data: dict) -> Path:
    """Write a report as JSON with sorted keys (atomic).

    Non-finite floats are written as null.
    """
    return atomic_write_text(
        path,
        json.dumps(_finite_or_none(data), indent=2, sort_keys=True, default=_json_default) + "\n",
    )


def _finite_or_none(value):
    if isinstance(value, dict):
        return {k: _finite_or_none(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(v) for v in value]
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return None
    return value


def write_csv(path: Path | str, columns: Sequence[str], data: np.ndarray) -> Path:
    """Write a numeric table with a header row (atomic).

    Args:
        path (Path | str): Destination
        columns (Sequence[str]): Column names
        data (np.ndarray): Array of shape (rows, len(columns))

    Returns:
        Path: The destination path
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[1] != len(columns):
        raise ValueError(f"Expected {len(columns)} columns, got {data.shape[1]}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        np.savetxt(tmp_name, data, delimiter=",", header=",".join(columns), comments="", fmt="%.12g")
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def read_csv(path: Path | str) -> tuple[list[str], np.ndarray]:
    """Read a table written by :func:`write_csv`."""
    path = Path(path)
    with open(path, "r") as handle:
        columns = handle.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return columns, data


@contextmanager
def RunSetup(
    log_file: Optional[Path | str] = None,
) -> Generator[Path, None, None]:
    """
    Context manager for a command run. Creates a temporary staging folder for the outputs and adds a log file handler if requested.

    Yields:
        Path: The temporary staging folder
    """
    if log_file is not None:
        logger_id = add_log_file_handler(log_file)

    tmp_output_folder = Path(tempfile.mkdtemp(prefix="cmclab_"))

    try:
        yield tmp_output_folder
    finally:
        remove_tmp_folder(tmp_output_folder)

        if log_file is not None:
            logger.remove(logger_id)


def publish_outputs(staging_folder: Path, output_folder: Path | str) -> list[Path]:
    """Move every staged file into the output folder, replacing existing files atomically.

    Args:
        staging_folder (Path): Folder with the staged outputs
        output_folder (Path | str): Destination folder

    Returns:
        list[Path]: The published files
    """
    output_folder = Path(output_folder).absolute()
    output_folder.mkdir(parents=True, exist_ok=True)
    published = []
    for staged in sorted(Path(staging_folder).iterdir()):
        if not staged.is_file():
            continue
        target = output_folder / staged.name
        # copy next to the target first so the final rename stays on one file system
        tmp_target = output_folder / f".{staged.name}.partial"
        shutil.copyfile(staged, tmp_target)
        os.replace(tmp_target, target)
        published.append(target)
    return published
