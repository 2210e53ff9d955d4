"""
Logging setup module for QEM Lab
One rotating log file per output tree plus an optional stderr echo
"""
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict

LOGGER_NAME = "QemLab"

FILE_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(module)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def _resolve_level(log_config: Dict[str, Any]) -> int:
    name = os.getenv("QEMLAB_LOG_LEVEL") or log_config.get("level", "INFO")
    return getattr(logging, str(name).upper(), logging.INFO)


def _file_handler(log_config: Dict[str, Any], level: int) -> RotatingFileHandler:
    path = Path(log_config.get("file_path", "logs/qemlab.log"))
    path.parent.mkdir(parents=True, exist_ok=True)
    if log_config.get("clear_on_start", False) and path.exists():
        path.unlink()

    handler = RotatingFileHandler(
        path,
        maxBytes=log_config.get("max_bytes", 10485760),
        backupCount=log_config.get("backup_count", 5),
        encoding='utf-8'
    )
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
    return handler


def _console_handler(level: int) -> logging.StreamHandler:
    # stdout carries command results (tables, ✓/✗ lines)
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter('%(message)s'))
    return handler


def close_logging():
    """Detach and close every handler on the QemLab logger"""
    logger = logging.getLogger(LOGGER_NAME)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()


def setup_logging(log_config: Dict[str, Any]) -> logging.Logger:
    """
    Configure the QemLab logger

    Args:
        log_config: The `logging` config section
            - level: DEBUG, INFO, WARNING or ERROR (QEMLAB_LOG_LEVEL wins)
            - file_path: Log file, parent directories are created
            - max_bytes / backup_count: Rotation settings
            - console_output: Echo messages to stderr
            - clear_on_start: Delete the previous log file first

    Returns:
        Configured logger instance
    """
    # several commands may run in one process (tests)
    close_logging()

    level = _resolve_level(log_config)
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level)
    logger.addHandler(_file_handler(log_config, level))
    if log_config.get("console_output", True):
        logger.addHandler(_console_handler(level))
    return logger
