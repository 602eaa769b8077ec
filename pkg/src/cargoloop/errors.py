"""Exception types raised across the package.

Validation outcomes and infeasibility results are data, not exceptions; the
classes here cover malformed inputs, protocol misuse, and backend faults.
"""

from __future__ import annotations


class CargoLoopError(Exception):
    """Base class for all package errors."""


class DatabaseFormatError(CargoLoopError):
    """A database file failed to parse or violated a record invariant."""

    def __init__(self, message: str, *, source: str = "<memory>", line: int | None = None):
        self.source = source
        self.line = line
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {message}")


class UnknownLocationError(CargoLoopError):
    """A location code is not present in the database."""

    def __init__(self, code: str, suggestions: tuple[str, ...] = ()):
        self.code = code
        self.suggestions = suggestions
        hint = f"; nearest known codes: {', '.join(suggestions)}" if suggestions else ""
        super().__init__(f"unknown location code {code!r}{hint}")


class GoalDecodeError(CargoLoopError):
    """A goal encoding could not be decoded."""

    def __init__(self, message: str, *, offset: int | None = None, path: str | None = None):
        self.offset = offset
        self.path = path
        where = ""
        if offset is not None:
            where = f" at offset {offset}"
        elif path:
            where = f" at {path}"
        super().__init__(f"{message}{where}")


class PddlParseError(CargoLoopError):
    """Malformed routing-fact text."""

    def __init__(self, message: str, *, line: int, column: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.column = column
        self.expected = expected
        hint = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"line {line} col {column}: {message}{hint}")


class BackendError(CargoLoopError):
    """The interpretation backend timed out or is unreachable."""

    def __init__(self, message: str, *, retry_after_s: float | None = None):
        self.retry_after_s = retry_after_s
        hint = f" (retry after {retry_after_s:g}s)" if retry_after_s is not None else ""
        super().__init__(f"{message}{hint}")


class CalibrationError(CargoLoopError):
    """Calibration training or scoring received unusable inputs."""


class ProtocolError(CargoLoopError):
    """An event is illegal in the session's current state."""

    def __init__(self, state: str, event: str):
        self.state = state
        self.event = event
        super().__init__(f"event {event} is illegal in state {state}")


class AnswerSchemaError(CargoLoopError):
    """A clarification answer does not satisfy the question's schema."""

    def __init__(self, slot: str, message: str, suggestions: tuple[str, ...] = ()):
        self.slot = slot
        self.suggestions = suggestions
        hint = f"; did you mean: {', '.join(suggestions)}?" if suggestions else ""
        super().__init__(f"answer for {slot!r} rejected: {message}{hint}")


class EmptyExportError(CargoLoopError):
    """A dataset export matched zero records where at least one is required."""
