"""
Centralized logging configuration for the solver.

Features:
- Console logging with colors (DEBUG level by default)
- Timestamped log files per run (INFO level by default)
- Optional JSON file logs via python-json-logger
- Structured logging through custom_dimensions and LogContext
- Trace and span ids of the active span on file records
"""

import json
import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

from opentelemetry import trace
from pythonjsonlogger import jsonlogger


# Color codes for console output
class LogColors:
    RESET = '\033[0m'
    BOLD = '\033[1m'

    DEBUG = '\033[36m'      # Cyan
    INFO = '\033[32m'       # Green
    WARNING = '\033[33m'    # Yellow
    ERROR = '\033[31m'      # Red
    CRITICAL = '\033[35m'   # Magenta


def _render_dimensions(record: logging.LogRecord, bold: str = '', reset: str = '') -> str:
    # LogContext dimensions first, per-call dimensions win on key clashes
    dims = {**getattr(record, 'context_dimensions', {}), **(getattr(record, 'custom_dimensions', None) or {})}
    if not dims:
        return ''
    try:
        return f"\n{bold}Custom Dimensions:{reset}\n{json.dumps(dims, indent=2, default=str, sort_keys=True)}"
    except (TypeError, ValueError):
        return f"\n{bold}Custom Dimensions (serialization failed):{reset} {dims}"


class TraceContextFilter(logging.Filter):
    """Stamp trace_id and span_id of the current OpenTelemetry span on every record."""

    def filter(self, record: logging.LogRecord) -> bool:
        ctx = trace.get_current_span().get_span_context()
        record.trace_id = format(ctx.trace_id, '032x') if ctx.is_valid else ''
        record.span_id = format(ctx.span_id, '016x') if ctx.is_valid else ''
        return True


class ColoredFormatter(logging.Formatter):
    """Custom formatter with color support for console output."""

    FORMATS = {
        logging.DEBUG: f"{LogColors.DEBUG}%(asctime)s - %(name)s - [DEBUG] - %(message)s{LogColors.RESET}",
        logging.INFO: f"{LogColors.INFO}%(asctime)s - %(name)s - [INFO] - %(message)s{LogColors.RESET}",
        logging.WARNING: f"{LogColors.WARNING}%(asctime)s - %(name)s - [WARNING] - %(message)s{LogColors.RESET}",
        logging.ERROR: f"{LogColors.ERROR}%(asctime)s - %(name)s - [ERROR] - %(message)s{LogColors.RESET}",
        logging.CRITICAL: f"{LogColors.CRITICAL}%(asctime)s - %(name)s - [CRITICAL] - %(message)s{LogColors.RESET}",
    }

    def format(self, record):
        formatter = logging.Formatter(self.FORMATS.get(record.levelno), datefmt='%Y-%m-%d %H:%M:%S')
        return formatter.format(record) + _render_dimensions(record, LogColors.BOLD, LogColors.RESET)


class FileFormatter(logging.Formatter):
    """Standard formatter for file output."""

    def __init__(self):
        super().__init__(
            fmt='%(asctime)s - %(name)s - [%(levelname)s] - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

    def format(self, record):
        text = super().format(record)
        if getattr(record, 'trace_id', ''):
            text += f" [trace_id={record.trace_id} span_id={record.span_id}]"
        return text + _render_dimensions(record)


def get_log_filename() -> str:
    """
    Generate a timestamped log filename for the current run.

    Returns:
        Filename in format: run_YYYY-MM-DD_HH-MM-SS.log
    """
    timestamp = datetime.now().strftime('%Y-%m-%d_%H-%M-%S')
    return f"run_{timestamp}.log"


def setup_logging(
    console_level: Optional[str] = None,
    file_level: Optional[str] = None,
    log_dir: Optional[str] = None,
    file_logging: Optional[bool] = None,
) -> logging.Logger:
    """
    Configure application-wide logging.

    Args:
        console_level: Log level for console output (default: GAMESOLVER_LOG_LEVEL or INFO)
        file_level: Log level for file output (default: GAMESOLVER_FILE_LOG_LEVEL or INFO)
        log_dir: Directory for log files (default: GAMESOLVER_LOG_DIR or ./logs)
        file_logging: Write a per-run log file (default: GAMESOLVER_FILE_LOGGING or true)

    Returns:
        Root logger instance
    """
    console_level = (console_level or os.getenv('GAMESOLVER_LOG_LEVEL', 'INFO')).upper()
    file_level = (file_level or os.getenv('GAMESOLVER_FILE_LOG_LEVEL', 'INFO')).upper()
    if file_logging is None:
        file_logging = os.getenv('GAMESOLVER_FILE_LOGGING', 'true').lower() == 'true'
    json_files = os.getenv('LOG_FORMAT', 'text').lower() == 'json'

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)  # handlers filter
    root_logger.handlers.clear()

    # Suppress noisy third-party loggers
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('opentelemetry').setLevel(logging.WARNING)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(getattr(logging, console_level, logging.INFO))
    console_handler.setFormatter(ColoredFormatter())
    root_logger.addHandler(console_handler)

    log_filepath = None
    if file_logging:
        logs_dir = Path(log_dir or os.getenv('GAMESOLVER_LOG_DIR', 'logs'))
        logs_dir.mkdir(parents=True, exist_ok=True)
        log_filepath = logs_dir / get_log_filename()
        file_handler = logging.FileHandler(log_filepath, encoding='utf-8')
        file_handler.setLevel(getattr(logging, file_level, logging.INFO))
        if json_files:
            file_handler.setFormatter(jsonlogger.JsonFormatter(
                '%(asctime)s %(name)s %(levelname)s %(message)s %(trace_id)s %(span_id)s'
            ))
        else:
            file_handler.setFormatter(FileFormatter())
        file_handler.addFilter(TraceContextFilter())
        root_logger.addHandler(file_handler)

    root_logger.info(
        f"Logging initialized - Console: {console_level}, File: {file_level if file_logging else 'off'}",
        extra={'custom_dimensions': {'log_file': str(log_filepath) if log_filepath else None,
                                     'json_files': json_files}}
    )
    return root_logger


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for a specific module.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Logger instance
    """
    return logging.getLogger(name)


class LogContext:
    """Context manager adding custom dimensions to every record logged inside it."""

    def __init__(self, **kwargs):
        self.custom_dimensions = kwargs

    def __enter__(self):
        self.original_factory = logging.getLogRecordFactory()

        def record_factory(*args, **kwargs):
            record = self.original_factory(*args, **kwargs)
            # extra={'custom_dimensions': ...} must stay assignable by makeRecord
            record.context_dimensions = {**getattr(record, 'context_dimensions', {}), **self.custom_dimensions}
            return record

        logging.setLogRecordFactory(record_factory)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        logging.setLogRecordFactory(self.original_factory)
