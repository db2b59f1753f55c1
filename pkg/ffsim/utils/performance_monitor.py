import time
import logging
from functools import wraps
from typing import Callable, Optional
from contextlib import contextmanager

from ffsim.config import settings

logger = logging.getLogger(__name__)


class PerformanceMonitor:
    """Timing utilities for long-running simulation and fitting work."""

    @staticmethod
    def monitor_time(threshold_seconds: Optional[float] = None):
        """
        Decorator to log a function's wall-clock time.

        Args:
            threshold_seconds: Warn when the call takes longer than this
                (defaults to settings.slow_operation_seconds)
        """
        def decorator(func: Callable) -> Callable:
            @wraps(func)
            def wrapper(*args, **kwargs):
                with PerformanceMonitor.measure_time(func.__name__, threshold_seconds):
                    return func(*args, **kwargs)
            return wrapper
        return decorator

    @staticmethod
    @contextmanager
    def measure_time(operation_name: str, threshold_seconds: Optional[float] = None):
        """
        Context manager to measure execution time of code blocks.

        Args:
            operation_name: Name of the operation being measured
            threshold_seconds: Warn if the block takes longer than this
        """
        threshold = settings.slow_operation_seconds if threshold_seconds is None else threshold_seconds
        start_time = time.perf_counter()
        try:
            yield
        finally:
            execution_time = time.perf_counter() - start_time
            if execution_time > threshold:
                logger.warning(
                    f"Slow operation: {operation_name} took {execution_time:.2f}s "
                    f"(threshold: {threshold}s)"
                )
            else:
                logger.debug(f"Operation {operation_name} completed in {execution_time:.2f}s")


# Global performance monitor instance
performance_monitor = PerformanceMonitor()

# Convenience aliases
monitor_time = performance_monitor.monitor_time
measure_time = performance_monitor.measure_time
