"""
Logging middleware for lab commands
"""
import logging
import time
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

from services.config import LoggingConfig

logger = logging.getLogger(__name__)

NOISY_LOGGERS = ("matplotlib", "numba", "asyncio", "PIL", "urllib3")


def setup_logging(config: Optional[LoggingConfig] = None) -> None:
    """Root logger with a rotating file handler and a console handler"""
    config = config or LoggingConfig()
    level = getattr(logging, str(config.level).upper(), logging.INFO)
    formatter = logging.Formatter(config.format)

    root = logging.getLogger()
    for handler in list(root.handlers):
        if (handler.get_name() or "").startswith("lab-"):
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)

    console = logging.StreamHandler()
    console.setFormatter(formatter)
    console.set_name("lab-console")
    root.addHandler(console)

    if config.file:
        path = Path(config.file)
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            path, maxBytes=config.max_bytes, backupCount=config.backup_count, encoding="utf-8"
        )
        file_handler.setFormatter(formatter)
        file_handler.set_name("lab-file")
        root.addHandler(file_handler)

    # Reduce noise from third-party libraries
    for noisy in NOISY_LOGGERS:
        logging.getLogger(noisy).setLevel(logging.WARNING)


class CommandLogger:
    """Logs each command with its arguments and outcome"""

    def __init__(self):
        self.logger = logging.getLogger("command")
        self.command_count = 0

    def log_command(self, command: str, args: Dict[str, Any]) -> None:
        self.command_count += 1
        shown = {k: v for k, v in args.items() if v is not None}
        self.logger.info(f"Command #{self.command_count} | {command} | Args: {shown}")

    def log_result(self, command: str, success: bool, duration: float, details: Optional[Dict[str, Any]] = None) -> None:
        status = "✅" if success else "❌"
        message = f"{status} Command {command} | Duration: {duration:.2f}s"
        if details:
            message += f" | {details}"
        if success:
            self.logger.info(message)
        else:
            self.logger.error(message)


class PerformanceLogger:
    """Per-operation timing"""

    def __init__(self, slow_threshold: float = 60.0):
        self.logger = logging.getLogger("performance")
        self.slow_threshold = slow_threshold
        self.metrics: Dict[str, Dict[str, float]] = {}

    def log_operation(self, operation: str, duration: float, success: bool) -> None:
        """Track an operation; failures and slow runs are logged"""
        if not success:
            self.logger.error(f"Operation failed | Operation: {operation} | Duration: {duration:.3f}s")
        elif duration > self.slow_threshold:
            self.log_slow_operation(operation, duration, {"threshold": self.slow_threshold})

        if operation not in self.metrics:
            self.metrics[operation] = {
                "count": 0,
                "total_duration": 0.0,
                "success_count": 0,
                "error_count": 0,
            }
        entry = self.metrics[operation]
        entry["count"] += 1
        entry["total_duration"] += duration
        if success:
            entry["success_count"] += 1
        else:
            entry["error_count"] += 1

    @contextmanager
    def track(self, operation: str) -> Iterator[None]:
        start = time.perf_counter()
        success = False
        try:
            yield
            success = True
        finally:
            self.log_operation(operation, time.perf_counter() - start, success)

    def get_metrics(self) -> dict:
        """Get performance metrics"""
        return {k: v.copy() for k, v in self.metrics.items()}

    def log_slow_operation(self, operation: str, duration: float, details: dict):
        self.logger.warning(
            f"Slow operation | "
            f"Operation: {operation} | "
            f"Duration: {duration:.3f}s | "
            f"Details: {details}"
        )


# Global instances
command_logger = CommandLogger()
performance_logger = PerformanceLogger()
