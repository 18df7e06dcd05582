"""
Exception hierarchy for the f-sketch library.

Every error raised on purpose by the package derives from FSketchError so
callers (the CLI in particular) can map failures to exit codes:

- ConfigError, DomainError, FormatError  -> exit code 2
- PipelineError, EstimationUnavailableError -> exit code 3

A K-Set "Fail" is a value (None), never an exception.
"""

from __future__ import annotations

from typing import Optional


class FSketchError(Exception):
    """Base class for all errors raised by the package."""
    pass


class ConfigError(FSketchError):
    """Raised when parameters are missing, out of range or inconsistent."""
    pass


class DomainError(FSketchError, ValueError):
    """Raised when an input lies outside the domain of an operation (index out of range, bad shape)."""
    pass


class EstimationUnavailableError(FSketchError):
    """Raised when every level of a sketch reports Fail at query time."""
    pass


class KSetOverflowError(FSketchError, OverflowError):
    """Raised when accumulated K-Set mass would leave the 64-bit signed range."""
    pass


class FormatError(FSketchError):
    """Raised when a stream file is corrupt, truncated or inconsistent with its header."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class PipelineError(FSketchError):
    """Raised when a multi-pass pipeline cannot complete one of its stages."""

    def __init__(self, message: str, stage: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
