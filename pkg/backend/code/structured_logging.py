"""
Centralized structured logging for the multiresilience lab.
JSON-lines records carry the run id and the logical rank of the simulated
process that emitted them.
"""

import logging
import json
import os
import time
import uuid
from contextvars import ContextVar
from datetime import datetime, timezone
from typing import Optional

from backend.code.paths import LOGS_DIR, TRACE_LOG_FPATH

# Context variables for correlation across ranks of one run
run_id_context: ContextVar[str] = ContextVar('run_id', default='')
rank_context: ContextVar[Optional[int]] = ContextVar('rank', default=None)

_DEFAULT_LEVEL = os.getenv("FTLAB_LOG_LEVEL", "INFO").upper()


class StructuredFormatter(logging.Formatter):
    """JSON formatter for structured logging with run and rank context"""

    def format(self, record: logging.LogRecord) -> str:
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "run_id": run_id_context.get(''),
            "rank": rank_context.get(None),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno
        }

        if hasattr(record, 'extra_fields'):
            log_entry.update(record.extra_fields)

        if hasattr(record, 'duration_ms'):
            log_entry["duration_ms"] = record.duration_ms

        return json.dumps(log_entry, ensure_ascii=False, default=str)


class LabLogger:
    """Component logger with structured keyword fields"""

    def __init__(self, name: str):
        self.logger = logging.getLogger(f"ftlab.{name}")
        self.logger.setLevel(_DEFAULT_LEVEL)
        self._setup_handlers()

    def _setup_handlers(self):
        """Setup file and console handlers with structured formatting"""
        if self.logger.handlers:
            return

        os.makedirs(LOGS_DIR, exist_ok=True)

        # File handler - structured JSON logs
        log_file = os.path.join(LOGS_DIR, "ftlab.jsonl")
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(StructuredFormatter())

        # Console handler - human readable
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.WARNING)
        console_handler.setFormatter(logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        ))

        self.logger.addHandler(file_handler)
        self.logger.addHandler(console_handler)
        self.logger.propagate = False

    def set_level(self, level: str) -> None:
        self.logger.setLevel(level.upper())

    def is_debug(self) -> bool:
        return self.logger.isEnabledFor(logging.DEBUG)

    def info(self, message: str, **kwargs):
        self._log(logging.INFO, message, **kwargs)

    def warning(self, message: str, **kwargs):
        self._log(logging.WARNING, message, **kwargs)

    def error(self, message: str, **kwargs):
        self._log(logging.ERROR, message, **kwargs)

    def debug(self, message: str, **kwargs):
        self._log(logging.DEBUG, message, **kwargs)

    def _log(self, level: int, message: str, **kwargs):
        if self.logger.isEnabledFor(level):
            self.logger.log(level, message, extra={"extra_fields": kwargs}, stacklevel=3)


class PerformanceTimer:
    """Context manager for timing operations with automatic logging"""

    def __init__(self, logger: LabLogger, operation: str, **context):
        self.logger = logger
        self.operation = operation
        self.context = context
        self.start_time = None
        self.elapsed = 0.0

    def __enter__(self):
        self.start_time = time.perf_counter()
        self.logger.debug(f"{self.operation}_started", **self.context)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed = time.perf_counter() - self.start_time
        duration_ms = round(self.elapsed * 1000, 3)
        if exc_type is None:
            self.logger.info(f"{self.operation}_completed", duration_ms=duration_ms, **self.context)
        elif issubclass(exc_type, Exception):
            self.logger.error(
                f"{self.operation}_failed",
                duration_ms=duration_ms,
                error_type=exc_type.__name__,
                error_message=str(exc_val),
                **self.context
            )


def get_logger(component: str) -> LabLogger:
    """Get logger instance for a lab component"""
    return LabLogger(component)


runtime_logger = get_logger("runtime")
checkpoint_logger = get_logger("checkpoint")
solver_logger = get_logger("solver")
faultlab_logger = get_logger("faultlab")
harness_logger = get_logger("harness")
cli_logger = get_logger("cli")

ALL_LOGGERS = (runtime_logger, checkpoint_logger, solver_logger, faultlab_logger, harness_logger, cli_logger)

# Runtime message trace: `epoch rank op tag bytes outcome`, off by default
trace_logger = logging.getLogger("ftlab.trace")
trace_logger.propagate = False
trace_logger.disabled = True


def configure_logging(level: Optional[str] = None, trace: bool = False) -> None:
    """Apply a log level to every component logger and toggle the trace log"""
    if level:
        for lab_logger in ALL_LOGGERS:
            lab_logger.set_level(level)
    trace_logger.disabled = not trace
    if trace and not trace_logger.handlers:
        os.makedirs(LOGS_DIR, exist_ok=True)
        handler = logging.FileHandler(TRACE_LOG_FPATH)
        handler.setFormatter(logging.Formatter("%(message)s"))
        trace_logger.addHandler(handler)
        trace_logger.setLevel(logging.INFO)


def start_run_tracking(run_id: Optional[str] = None) -> str:
    """Initialize the run id for a new experiment repetition"""
    if not run_id:
        run_id = str(uuid.uuid4())[:8]
    run_id_context.set(run_id)
    return run_id
