"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations

from typing import Any


class DomainError(ValueError):
    """Input lies outside the domain where the operation is defined."""


class DegenerateInputError(ValueError):
    """Input is rank-deficient or otherwise too degenerate to process."""


class ProtocolError(ValueError):
    """A training or evaluation protocol cannot be satisfied by the data."""


class EmptyTrackError(ValueError):
    """A detection series contains no usable detections."""


class ParseError(ValueError):
    """A file could not be parsed.

    Args:
        message: Human readable description
        line: 1-based line number of the offending row, when known
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorruptModelError(ValueError):
    """A model file failed its checksum or is truncated."""


class ArchitectureMismatchError(ValueError):
    """A model file describes an architecture other than the one expected."""


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite value.

    Args:
        message: Description of the failure
        operation: Name of the operation that produced the non-finite value
        last_good: Snapshot of the model(s) before the failing step
        epoch: Epoch during which the divergence happened
    """

    def __init__(
        self,
        message: str,
        operation: str | None = None,
        last_good: Any = None,
        epoch: int | None = None,
    ):
        self.operation = operation
        self.last_good = last_good
        self.epoch = epoch
        super().__init__(message)
