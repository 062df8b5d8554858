"""Exception types shared across the package.

The CLI maps ValidationError (and subclasses) to exit code 1 and anything
else unexpected to exit code 2.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Input data violates a documented invariant."""


class ParseError(ValidationError):
    """A file could not be parsed; carries location context when known."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += path
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(ValidationError):
    """Bad key=value configuration input."""


class SessionError(RuntimeError):
    """An agent failed mid-session; the original error is chained."""


class TrainingError(RuntimeError):
    """Optimization diverged; the message carries the epoch/step index."""


class AnnotationError(RuntimeError):
    """The annotation endpoint kept failing or returned an unusable payload."""


class TransportError(AnnotationError):
    """All delivery attempts to the endpoint failed."""


class ProtocolError(AnnotationError):
    """The endpoint answered with something that is not a usable completion."""
