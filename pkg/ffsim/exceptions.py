"""
Custom exception classes for structured error handling.
"""
from typing import Optional, Dict, Any, List


EXIT_OK = 0
EXIT_RUNTIME_FAILURE = 1
EXIT_VALIDATION_ERROR = 2


class SimulationError(Exception):
    """Base class for all simulator exceptions."""

    exit_code: int = EXIT_RUNTIME_FAILURE

    def __init__(
        self,
        detail: str,
        error_code: str,
        context: Optional[Dict[str, Any]] = None,
    ):
        self.detail = detail
        self.error_code = error_code
        self.context = context or {}
        super().__init__(detail)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error_code": self.error_code,
            "message": self.detail,
            "context": self.context,
        }


class SchemaError(SimulationError):
    """Raised when a pool, parameter or step-log file does not match its schema."""

    exit_code = EXIT_VALIDATION_ERROR

    def __init__(
        self,
        detail: str = "File does not match its schema",
        path: Optional[str] = None,
        problem_id: Optional[str] = None,
        step: Optional[int] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        error_context = context or {}
        if path:
            error_context["path"] = str(path)
        if problem_id is not None:
            error_context["problem_id"] = problem_id
        if step is not None:
            error_context["step"] = step

        super().__init__(detail=detail, error_code="SCHEMA_ERROR", context=error_context)


class ConfigValidationError(SimulationError):
    """Raised when an experiment config fails validation; carries every error found."""

    exit_code = EXIT_VALIDATION_ERROR

    def __init__(
        self,
        errors: List[str],
        path: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        self.errors = list(errors)
        error_context = context or {}
        if path:
            error_context["path"] = str(path)
        error_context["errors"] = self.errors

        super().__init__(
            detail=f"{len(self.errors)} configuration error(s)",
            error_code="CONFIG_VALIDATION_ERROR",
            context=error_context,
        )


class PoolStateError(SimulationError):
    """Raised when the problem pool is used against its state contract (a caller bug)."""

    def __init__(
        self,
        detail: str = "Invalid problem pool operation",
        operation: Optional[str] = None,
        problem_id: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        error_context = context or {}
        if operation:
            error_context["operation"] = operation
        if problem_id is not None:
            error_context["problem_id"] = problem_id

        super().__init__(detail=detail, error_code="POOL_STATE_ERROR", context=error_context)


class SelectorContractError(SimulationError):
    """Raised when a selector is invoked outside its contract."""

    def __init__(
        self,
        detail: str = "Selector called outside its contract",
        selector: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        error_context = context or {}
        if selector:
            error_context["selector"] = selector

        super().__init__(detail=detail, error_code="SELECTOR_CONTRACT_ERROR", context=error_context)


class NumericalError(SimulationError):
    """Raised when a model computation produces a non-finite value."""

    def __init__(
        self,
        detail: str = "Non-finite value produced",
        quantity: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        error_context = context or {}
        if quantity:
            error_context["quantity"] = quantity

        super().__init__(detail=detail, error_code="NUMERICAL_ERROR", context=error_context)


class FitError(SimulationError):
    """Raised when AFM fitting cannot continue."""

    def __init__(
        self,
        detail: str = "AFM fit failed",
        iteration: Optional[int] = None,
        objective: Optional[float] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        error_context = context or {}
        if iteration is not None:
            error_context["iteration"] = iteration
        if objective is not None:
            error_context["objective"] = objective

        super().__init__(detail=detail, error_code="FIT_ERROR", context=error_context)


class StepCapExceededError(SimulationError):
    """Raised when a run-to-mastery session hits the attempted-step safety cap."""

    def __init__(
        self,
        step_cap: int,
        student_index: Optional[int] = None,
        selector: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        error_context = context or {}
        error_context["step_cap"] = step_cap
        if student_index is not None:
            error_context["student_index"] = student_index
        if selector:
            error_context["selector"] = selector

        super().__init__(
            detail=f"Session did not reach mastery within {step_cap} attempted steps",
            error_code="STEP_CAP_EXCEEDED",
            context=error_context,
        )


class UsageError(SimulationError):
    """Raised when an API is called with arguments it cannot accept."""

    exit_code = EXIT_VALIDATION_ERROR

    def __init__(
        self,
        detail: str = "Invalid usage",
        argument: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        error_context = context or {}
        if argument:
            error_context["argument"] = argument

        super().__init__(detail=detail, error_code="USAGE_ERROR", context=error_context)
