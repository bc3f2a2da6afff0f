"""Exception hierarchy shared across the package.

Kept in one module so adapters, engine, store, and CLI can raise the same
types without import cycles.
"""

from __future__ import annotations


class SafeRefineError(Exception):
    """Base class for all package-specific errors."""


class RangeError(SafeRefineError, ValueError):
    """A numeric field is outside its declared range."""


class PreconditionError(SafeRefineError):
    """An operation was invoked in a state its contract excludes."""


class ConfigError(SafeRefineError):
    """Run configuration is missing, malformed, or inconsistent."""


# --- dataset loading ---------------------------------------------------------

class ParseError(SafeRefineError):
    """A record in a line-delimited file could not be parsed.

    Carries the 1-based line number so diagnostics can point at the input.
    """

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DuplicateIdError(SafeRefineError):
    """Two records in one dataset share an id."""


class BalanceError(SafeRefineError):
    """Strict balance was requested but per-principle counts differ."""


# --- agent adapters ----------------------------------------------------------

class TransportError(SafeRefineError):
    """A remote request failed at the transport level after the retry budget."""


class RequestTimeoutError(TransportError):
    """A remote request exceeded its configured timeout."""


class MalformedResponseError(SafeRefineError):
    """A remote reply could not be turned into a valid assessment or draft."""


class MissingTrajectoryError(SafeRefineError):
    """The scripted backend has no step for the requested query/iteration."""


class AgentFailure(SafeRefineError):
    """An adapter error surfaced while running a query.

    The partial iteration traces collected before the failure are attached
    for audit, so a failed query still leaves a usable record.
    """

    def __init__(self, query_id: str, stage: str, cause: Exception, traces=()):
        self.query_id = query_id
        self.stage = stage
        self.cause = cause
        self.traces = list(traces)
        super().__init__(f"query {query_id!r} failed during {stage}: {cause}")


# --- metrics and reporting ---------------------------------------------------

class EmptyInputError(SafeRefineError):
    """A metric was asked to aggregate zero results."""


class MissingGeneratorError(SafeRefineError):
    """A comparison metric needs runs from two generators but got one."""


class ReportError(SafeRefineError):
    """A report cannot be rendered from the given inputs."""


# --- run store ---------------------------------------------------------------

class StorageError(SafeRefineError):
    """The run store could not read or write its files."""


class UnknownRunError(SafeRefineError):
    """No run with the given id exists in the store."""


class SealedRunError(UnknownRunError):
    """The run exists but is Complete; it no longer accepts appends."""


class ConfigMismatchError(SafeRefineError):
    """Resume was attempted with a configuration digest that differs from
    the one recorded in the run manifest."""
