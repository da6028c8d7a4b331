"""
Logging for runs and sweeps.

Physics diagnostics travel in ``extra`` and are often numpy scalars, arrays
or complex numbers; the JSON formatter turns them into plain JSON values.
"""
import json
import logging
import logging.handlers
import sys
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import numpy as np

from config import LoggingConfig

# attributes every LogRecord has; anything else came in through ``extra``
_RECORD_FIELDS = frozenset(vars(logging.makeLogRecord({}))) | {"message", "asctime"}
QUIET_LOGGERS = ("joblib", "matplotlib")


def _json_default(value: Any) -> Any:
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


class JSONFormatter(logging.Formatter):
    """One JSON object per record"""

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, timezone.utc).isoformat(timespec="milliseconds"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "origin": f"{record.module}.{record.funcName}:{record.lineno}",
        }
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)

        extra = {k: v for k, v in vars(record).items() if k not in _RECORD_FIELDS}
        if extra:
            entry["extra"] = extra
        return json.dumps(entry, default=_json_default, ensure_ascii=False)


class ContextFilter(logging.Filter):
    """Stamp every record with the application and run identity"""

    def __init__(self, app_name: str, version: str, environment: str, run_id: Optional[str] = None):
        super().__init__()
        self.context = {"app_name": app_name, "version": version, "environment": environment}
        if run_id is not None:
            self.context["run_id"] = run_id

    def filter(self, record: logging.LogRecord) -> bool:
        for key, value in self.context.items():
            setattr(record, key, value)
        return True


def _handlers(config: LoggingConfig) -> List[logging.Handler]:
    # stderr keeps stdout free for the CLI tables
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if config.file_path:
        path = Path(config.file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.handlers.RotatingFileHandler(
            filename=path, maxBytes=config.max_bytes, backupCount=config.backup_count, encoding="utf-8"
        ))
    return handlers


def setup_logging(
    config: LoggingConfig,
    app_name: str = "lattice-emission",
    version: str = "1.0.0",
    environment: str = "development",
    run_id: Optional[str] = None,
) -> None:
    """Configure the root logger once per process"""
    root = logging.getLogger()
    root.setLevel(getattr(logging, config.level.upper()))
    root.handlers.clear()

    formatter = JSONFormatter() if config.structured_logging else logging.Formatter(config.format)
    context = ContextFilter(app_name, version, environment, run_id)
    for handler in _handlers(config):
        handler.setFormatter(formatter)
        handler.addFilter(context)
        root.addHandler(handler)

    # scipy's IntegrationWarning and numpy's RuntimeWarning end up in the log
    logging.captureWarnings(True)
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    logging.getLogger(__name__).info(
        "Logging initialized",
        extra={
            "log_level": config.level,
            "structured_logging": config.structured_logging,
            "file_logging": config.file_path is not None,
        },
    )


class LoggingMixin:
    """Per-class logger plus call and timing records"""

    @property
    def logger(self) -> logging.Logger:
        return logging.getLogger(f"{self.__class__.__module__}.{self.__class__.__name__}")

    def log_method_call(self, method_name: str, **kwargs) -> None:
        self.logger.debug(f"Calling {method_name}", extra={"method": method_name, "parameters": kwargs})

    @contextmanager
    def timed(self, label: str, **context: Any) -> Iterator[Dict[str, Any]]:
        """Log the wall time of the block; the yielded dict is merged into the record"""
        record: Dict[str, Any] = dict(context)
        started = time.perf_counter()
        try:
            yield record
        except Exception:
            record["wall_time_s"] = time.perf_counter() - started
            self.logger.debug(f"{label} failed", extra=record)
            raise
        record["wall_time_s"] = time.perf_counter() - started
        self.logger.debug(f"{label} finished", extra=record)
