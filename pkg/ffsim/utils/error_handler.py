"""
Error handling utilities for command-line verbs.
"""
import logging
import sys
from functools import wraps
from typing import Any, Callable, Optional, TextIO

from pydantic import ValidationError

from ffsim.exceptions import (
    EXIT_RUNTIME_FAILURE,
    EXIT_VALIDATION_ERROR,
    ConfigValidationError,
    SimulationError,
)

logger = logging.getLogger(__name__)


class ErrorHandler:
    """Maps simulator failures onto log records, user-facing messages and exit codes."""

    @staticmethod
    def handle_simulation_error(
        e: SimulationError,
        operation: str,
        stream: Optional[TextIO] = None,
    ) -> int:
        """
        Report a known simulator failure.

        Args:
            e: The exception that occurred
            operation: Name of the command or step that failed
            stream: Where the user-facing message goes (stderr by default)

        Returns:
            The process exit code for this failure
        """
        stream = stream or sys.stderr
        error_context = {"operation": operation, **e.to_dict()}

        if e.exit_code == EXIT_VALIDATION_ERROR:
            logger.warning(f"Invalid input in {operation}: {e.detail}", extra={"error_context": error_context})
        else:
            logger.error(f"{operation} failed: {e.detail}", extra={"error_context": error_context}, exc_info=True)

        if isinstance(e, ConfigValidationError):
            print(f"error: {e.detail} in {e.context.get('path', 'config')}", file=stream)
            for message in e.errors:
                print(f"  {message}", file=stream)
        else:
            print(f"error [{e.error_code}]: {e.detail}", file=stream)
            for key in ("path", "problem_id", "step", "errors"):
                if key in e.context:
                    print(f"  {key}: {e.context[key]}", file=stream)
        return e.exit_code

    @staticmethod
    def handle_validation_error(
        e: ValidationError,
        operation: str,
        stream: Optional[TextIO] = None,
    ) -> int:
        """Report a pydantic validation failure that escaped the loaders."""
        stream = stream or sys.stderr
        logger.warning(f"Validation error in {operation}", extra={"error_count": e.error_count()})
        print(f"error: invalid input for {operation}", file=stream)
        for err in e.errors():
            print(f"  {'.'.join(map(str, err['loc']))}: {err['msg']}", file=stream)
        return EXIT_VALIDATION_ERROR

    @staticmethod
    def handle_unexpected_error(e: Exception, operation: str, stream: Optional[TextIO] = None) -> int:
        stream = stream or sys.stderr
        logger.error(
            f"Unexpected error in {operation}",
            extra={"operation": operation, "error_type": type(e).__name__, "error_message": str(e)},
            exc_info=True,
        )
        print(f"error: unexpected {type(e).__name__} in {operation}: {e}", file=stream)
        return EXIT_RUNTIME_FAILURE

    @staticmethod
    def safe_execute(operation: Callable[[], Any], operation_name: str, stream: Optional[TextIO] = None) -> Any:
        """
        Run an operation, converting failures into an exit code.

        Returns:
            The operation's result, or the exit code (int) when it failed
        """
        try:
            return operation()
        except SimulationError as e:
            return ErrorHandler.handle_simulation_error(e, operation_name, stream)
        except ValidationError as e:
            return ErrorHandler.handle_validation_error(e, operation_name, stream)
        except OSError as e:
            logger.error(f"I/O error in {operation_name}: {e}", exc_info=True)
            print(f"error: {e}", file=stream or sys.stderr)
            return EXIT_RUNTIME_FAILURE
        except Exception as e:
            return ErrorHandler.handle_unexpected_error(e, operation_name, stream)


def cli_error_handler(operation: str):
    """
    Decorator for command verbs: the wrapped function returns an exit code,
    and any failure it raises is turned into one.

    Usage:
        @cli_error_handler("run")
        def run_command(args) -> int:
            ...
    """
    def decorator(func: Callable[..., int]) -> Callable[..., int]:
        @wraps(func)
        def wrapper(*args, **kwargs) -> int:
            return ErrorHandler.safe_execute(lambda: func(*args, **kwargs), operation)
        return wrapper
    return decorator
