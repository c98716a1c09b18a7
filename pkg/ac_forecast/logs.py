"""Logging system for ac_forecast.

Keeps timestamped in-memory buffers of application, error and training
events alongside the standard library loggers used by each module.
"""

import datetime
import logging
import os
from collections import deque

# Per-epoch lines from every series; only the most recent are kept.
TRAIN_LOG_LIMIT = 10_000

APP_LOGS: list[str] = []
ERROR_LOGS: list[str] = []
TRAIN_LOGS: deque[str] = deque(maxlen=TRAIN_LOG_LIMIT)

logger = logging.getLogger("ac_forecast")

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: str | int | None = None) -> None:
    """Configure the root handler for command-line use.

    Args:
        level: Level name or number. Falls back to ``AC_FORECAST_LOG_LEVEL``
            and then ``WARNING``.

    """
    if level is None:
        level = os.environ.get("AC_FORECAST_LOG_LEVEL", "WARNING")
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.WARNING
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=level, format=_LOG_FORMAT)
    root.setLevel(level)


def log_train(msg: str):
    """Log training progress messages.

    Args:
        msg: Training message to log.

    """
    timestamp = datetime.datetime.now().isoformat()
    TRAIN_LOGS.append(f"[{timestamp}] {msg}")
    logger.debug(msg)


def log_error(msg: str):
    """Log error messages to both error and application logs.

    Args:
        msg: Error message to log.

    """
    timestamp = datetime.datetime.now().isoformat()
    ERROR_LOGS.append(f"[{timestamp}] {msg}")
    APP_LOGS.append(f"[{timestamp}] ERROR: {msg}")
    logger.warning(msg)


def log_app(msg: str):
    """Log application messages.

    Args:
        msg: Application message to log.

    """
    timestamp = datetime.datetime.now().isoformat()
    APP_LOGS.append(f"[{timestamp}] {msg}")
    logger.info(msg)
