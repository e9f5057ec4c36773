"""Error classes and CLI error formatting for reclustering"""

import traceback
from fractions import Fraction
from typing import Any

from pydantic import BaseModel

# Process exit codes shared by every command
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3

ErrorDict = dict[str, Any]


class ErrorContext(BaseModel):
    """Where an error happened"""

    file_path: str | None = None
    column: str | None = None
    function_name: str | None = None
    scenario_cell: str | None = None
    iteration: int | None = None
    test_name: str | None = None


class ReclusteringError(Exception):
    """Base exception class for all reclustering errors"""

    exit_code: int = EXIT_DATA

    def __init__(
        self,
        message: str,
        error_code: str,
        context: ErrorContext | None = None,
        original_error: Exception | None = None,
        suggestions: list[str] | None = None,
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.context = context or ErrorContext()
        self.original_error = original_error
        self.suggestions = suggestions or []
        self.traceback_str = traceback.format_exc() if original_error else None

    def __str__(self) -> str:
        return f"{self.message} ({self.error_code})"

    def to_dict(self) -> ErrorDict:
        """Convert error to dictionary for JSON serialization"""
        return {
            "error_type": self.__class__.__name__,
            "error_code": self.error_code,
            "message": self.message,
            "context": self.context.model_dump(exclude_none=True),
            "suggestions": self.suggestions,
            "original_error": str(self.original_error) if self.original_error else None,
        }

    def get_detailed_message(self) -> str:
        """Get detailed error message with context and suggestions"""
        parts = [f"Error {self.error_code}: {self.message}"]

        if self.context.scenario_cell:
            parts.append(f"Scenario cell: {self.context.scenario_cell}")
        if self.context.iteration is not None:
            parts.append(f"Iteration: {self.context.iteration}")
        if self.context.test_name:
            parts.append(f"Test: {self.context.test_name}")
        if self.context.file_path:
            location = self.context.file_path
            if self.context.column:
                location += f" [column {self.context.column}]"
            parts.append(f"Location: {location}")

        if self.original_error:
            parts.append(f"Underlying error: {self.original_error}")

        if self.suggestions:
            parts.append("Suggestions:")
            for suggestion in self.suggestions:
                parts.append(f"  - {suggestion}")

        return "\n".join(parts)


class ConfigurationError(ReclusteringError):
    """Invalid configuration, scenario file or command-line combination"""

    exit_code = EXIT_USAGE

    def __init__(self, message: str, config_key: str | None = None, **kwargs: Any):
        if "suggestions" not in kwargs:
            suggestions = [
                "Check configuration file syntax",
                "Use 'reclustering config show' to inspect the resolved configuration",
            ]
            if config_key:
                suggestions.append(f"Check the '{config_key}' configuration value")
            kwargs["suggestions"] = suggestions
        super().__init__(message=message, error_code="CONFIGURATION_ERROR", **kwargs)
        self.config_key = config_key


class EnumerationLimitError(ReclusteringError):
    """Exhaustive enumeration requested over more regroupings than allowed"""

    exit_code = EXIT_USAGE

    def __init__(self, count: int, cap: int, **kwargs: Any):
        kwargs.setdefault(
            "suggestions",
            [
                "Use the Monte Carlo permutation test instead",
                "Raise 'exhaustive_cap' if the enumeration is affordable",
            ],
        )
        super().__init__(
            message=f"{count:,} distinct regroupings exceed the enumeration cap of {cap:,}",
            error_code="ENUMERATION_LIMIT",
            **kwargs,
        )
        self.count = count
        self.cap = cap


class ClusterStructureError(ReclusteringError):
    """The two-level cluster structure violates an invariant"""

    def __init__(self, message: str, **kwargs: Any):
        kwargs.setdefault(
            "suggestions",
            [
                "Check that every fine cluster lies inside exactly one gross cluster",
                "Check the fine/gross cluster id columns for typos",
            ],
        )
        super().__init__(message=message, error_code="CLUSTER_STRUCTURE_ERROR", **kwargs)


class DataError(ReclusteringError):
    """Input data cannot support the requested fit or test"""

    def __init__(self, message: str, **kwargs: Any):
        kwargs.setdefault("suggestions", ["Check input data format and values"])
        super().__init__(message=message, error_code="DATA_ERROR", **kwargs)


class ResourceError(ReclusteringError):
    """Files that cannot be read or written"""

    def __init__(
        self,
        message: str,
        resource_path: str | None = None,
        **kwargs: Any,
    ):
        if "context" not in kwargs:
            kwargs["context"] = ErrorContext(file_path=resource_path)
        kwargs.setdefault(
            "suggestions",
            ["Check if the file exists and is accessible", "Verify file permissions"],
        )
        super().__init__(message=message, error_code="RESOURCE_ERROR", **kwargs)


class InfeasibleStructureError(ReclusteringError):
    """Too few distinct regroupings to ever reach the requested level"""

    exit_code = EXIT_INFEASIBLE

    def __init__(self, partitions: int | Fraction, required: float, **kwargs: Any):
        kwargs.setdefault(
            "suggestions",
            [
                f"At least {required:g} distinct regroupings are needed at this level",
                "Pass --force to run the test anyway",
            ],
        )
        super().__init__(
            message=(
                f"Only {partitions} distinct partitions; the test cannot reject "
                f"at the requested level"
            ),
            error_code="INFEASIBLE_STRUCTURE",
            **kwargs,
        )
        self.partitions = partitions
        self.required = required


class SimulationError(ReclusteringError):
    """An error raised inside one Monte Carlo iteration"""

    def __init__(self, message: str, scenario_cell: str, iteration: int, **kwargs: Any):
        if "context" not in kwargs:
            kwargs["context"] = ErrorContext(scenario_cell=scenario_cell, iteration=iteration)
        super().__init__(message=message, error_code="SIMULATION_ERROR", **kwargs)
        self.iteration = iteration


def create_error_from_exception(
    exc: Exception, context: ErrorContext | None = None, suggestions: list[str] | None = None
) -> ReclusteringError:
    """Create the matching ReclusteringError from a generic exception"""
    if isinstance(exc, ReclusteringError):
        return exc

    message = str(exc)

    if isinstance(exc, FileNotFoundError):
        filename = getattr(exc, "filename", None)
        if context is None:
            context = ErrorContext(file_path=filename)
        return ResourceError(
            message=f"File not found: {message}",
            resource_path=filename,
            context=context,
            original_error=exc,
            **({"suggestions": suggestions} if suggestions else {}),
        )
    elif isinstance(exc, PermissionError):
        return ResourceError(
            message=f"Permission denied: {message}",
            context=context or ErrorContext(),
            original_error=exc,
            suggestions=suggestions or ["Check file/directory permissions"],
        )
    elif isinstance(exc, ValueError | TypeError | ArithmeticError):
        return DataError(
            message=f"Invalid value: {message}",
            context=context,
            original_error=exc,
            suggestions=suggestions or ["Check input data format and values"],
        )
    else:
        return ReclusteringError(
            message=f"{type(exc).__name__}: {message}",
            error_code="UNKNOWN_ERROR",
            context=context,
            original_error=exc,
            suggestions=suggestions or ["Re-run with --verbose for details"],
        )


class ErrorReporter:
    """Formatting helpers for errors shown on the command line"""

    @staticmethod
    def format_error_for_cli(error: ReclusteringError, verbose: bool = False) -> str:
        if verbose:
            return error.get_detailed_message()

        message_parts = [f"❌ {error.message}"]
        if error.context.iteration is not None:
            message_parts.append(
                f"   Iteration: {error.context.iteration} ({error.context.scenario_cell})"
            )
        if error.suggestions:
            message_parts.append(f"   Suggestion: {error.suggestions[0]}")
        return "\n".join(message_parts)

    @staticmethod
    def format_error_for_json(error: ReclusteringError) -> ErrorDict:
        return error.to_dict()
