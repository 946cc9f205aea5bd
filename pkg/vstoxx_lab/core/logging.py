import logging
import json
import sys
import time
from datetime import datetime, timezone
from functools import wraps

from .config import settings


class StructuredLogger:
    def __init__(self, name: str):
        self.name = name
        self.logger = logging.getLogger(f"vstoxx_lab.{name}")
        self.logger.setLevel(getattr(logging, settings.log_level.upper(), logging.INFO))
        self.logger.propagate = False

        if not self.logger.handlers:
            # stdout is reserved for command payloads (oracle JSON)
            handler = logging.StreamHandler(sys.stderr)
            formatter = logging.Formatter('%(message)s')
            handler.setFormatter(formatter)
            self.logger.addHandler(handler)

    def log(self, level: str, message: str, **kwargs):
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": level,
            "logger": self.name,
            "message": message,
            **kwargs
        }
        self.logger.log(getattr(logging, level), json.dumps(log_data, default=str))

    def debug(self, message: str, **kwargs):
        self.log("DEBUG", message, **kwargs)

    def info(self, message: str, **kwargs):
        self.log("INFO", message, **kwargs)

    def error(self, message: str, **kwargs):
        self.log("ERROR", message, **kwargs)

    def warning(self, message: str, **kwargs):
        self.log("WARNING", message, **kwargs)


def log_performance(func):
    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        logger = StructuredLogger("performance")

        try:
            result = func(*args, **kwargs)
            duration = time.perf_counter() - start_time

            logger.info(
                "Function completed",
                function=func.__qualname__,
                duration_ms=round(duration * 1000, 2),
                success=True
            )

            return result
        except Exception as e:
            duration = time.perf_counter() - start_time

            logger.error(
                "Function failed",
                function=func.__qualname__,
                duration_ms=round(duration * 1000, 2),
                error=str(e),
                success=False
            )

            raise

    return wrapper
