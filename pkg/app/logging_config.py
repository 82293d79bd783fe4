# Copyright (c) 2024. All rights reserved.
"""Logging configuration for the synchronization-rate toolkit.

All components log under the ``syncrate`` logger hierarchy:
- DEBUG: per-iteration learner decisions and per-slot simulator outcomes
- INFO: experiment and cell lifecycle, solver results
- WARNING: eligibility shortfalls, configuration fallbacks
- ERROR: failed sweep cells

Sweep cells may run in worker processes; ``setup_worker_logging`` is their
pool initializer and tags every record with the worker's process name.
"""

import logging
import sys

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)-22s | %(message)s"
WORKER_LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(processName)-20s | %(name)-22s | %(message)s"
LOG_DATE_FORMAT = "%H:%M:%S"

# Root of the component logger hierarchy (syncrate.mck, syncrate.learn, ...)
LOGGER_ROOT = "syncrate"


def _as_level(level: int | str) -> int:
    if isinstance(level, str):
        return getattr(logging, level.upper(), logging.INFO)
    return level


def _configure(level: int, fmt: str, log_file: str | None) -> logging.Logger:
    logger = logging.getLogger(LOGGER_ROOT)
    logger.setLevel(level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(fmt, datefmt=LOG_DATE_FORMAT)

    # stderr only; stdout carries the run summary
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger


def setup_logging(
    level: int | str = logging.INFO,
    log_file: str | None = None,
) -> logging.Logger:
    """Configure the ``syncrate`` loggers of the main process.

    Args:
        level: Logging level name (DEBUG, INFO, ...) or constant.
        log_file: Optional file that receives the same records as stderr.

    Returns:
        The root ``syncrate`` logger.
    """
    return _configure(_as_level(level), LOG_FORMAT, log_file)


def setup_worker_logging(level: int | str = logging.INFO) -> None:
    """Pool initializer: stderr logging with the worker's process name.

    Workers never open the log file, so records from parallel cells cannot
    interleave inside it.
    """
    _configure(_as_level(level), WORKER_LOG_FORMAT, None)


def current_level() -> int:
    """Effective level of the ``syncrate`` hierarchy, handed to workers."""
    return logging.getLogger(LOGGER_ROOT).getEffectiveLevel()
