from __future__ import annotations


class RankFusionError(ValueError):
    """Base class for data errors raised by this package."""


class ParseError(RankFusionError):
    """Input text could not be parsed. ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ValidationError(RankFusionError):
    """Parsed data violates a structural invariant."""
