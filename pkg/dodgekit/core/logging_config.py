"""
Structured logging for dodgekit.

Records go to stderr (stdout carries command output) and optionally to a rotating file.
Every record is stamped with the id of the study or optimization run in progress.
"""

import logging
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime, timezone
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Iterator, Optional

from pythonjsonlogger import jsonlogger

LOG_FILE_MAX_BYTES = 10 * 1024 * 1024
LOG_FILE_BACKUPS = 5
TEXT_FORMAT = "%(asctime)s %(levelname)-8s %(name)s [%(run_id)s] %(message)s"

# third-party loggers that chatter at INFO inside study repeats
QUIET_LOGGERS = ("joblib",)

_run_id: ContextVar[str] = ContextVar("dodgekit_run_id", default="")


class RunJsonFormatter(jsonlogger.JsonFormatter):
    """One JSON object per record: time, level, source location, run id and extras."""

    def add_fields(self, log_record: dict, record: logging.LogRecord, message_dict: dict) -> None:
        super().add_fields(log_record, record, message_dict)
        log_record["timestamp"] = datetime.now(timezone.utc).isoformat()
        log_record["level"] = record.levelname
        log_record["logger"] = record.name
        log_record["where"] = f"{record.module}.{record.funcName}:{record.lineno}"
        log_record["run_id"] = getattr(record, "run_id", "")


class RunIdFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = _run_id.get()
        return True


def current_run_id() -> str:
    return _run_id.get()


@contextmanager
def run_context(run_id: str) -> Iterator[str]:
    """Stamp `run_id` on every record logged inside the block."""
    token = _run_id.set(run_id)
    try:
        yield run_id
    finally:
        _run_id.reset(token)


def _attach(root: logging.Logger, handler: logging.Handler, formatter: logging.Formatter) -> None:
    handler.setFormatter(formatter)
    handler.addFilter(RunIdFilter())
    root.addHandler(handler)


def setup_logging(level: str = "INFO", log_format: str = "json",
                  log_file: Optional[str] = None) -> None:
    """
    Replace the root handlers with a stderr handler and, when log_file is set, a
    rotating file handler.

    Raises:
        ValueError: unknown level name
    """
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"unknown log level '{level}'")

    root = logging.getLogger()
    root.setLevel(numeric)
    for handler in root.handlers[:]:
        root.removeHandler(handler)

    if log_format.lower() == "json":
        formatter: logging.Formatter = RunJsonFormatter("%(message)s")
    else:
        formatter = logging.Formatter(TEXT_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")

    _attach(root, logging.StreamHandler(sys.stderr), formatter)
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        _attach(
            root,
            RotatingFileHandler(log_file, maxBytes=LOG_FILE_MAX_BYTES,
                                backupCount=LOG_FILE_BACKUPS, encoding="utf-8"),
            formatter,
        )

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    logging.getLogger(__name__).debug(
        "Logging configured",
        extra={"level": level, "format": log_format, "file": log_file or "stderr only"},
    )


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
