"""
Exception types raised by the omniview toolkit.
"""

from typing import Optional


class OmniviewError(Exception):
    """Base exception for toolkit errors."""
    pass


class ArgumentError(OmniviewError, ValueError):
    """An argument is outside the range an operation accepts."""
    pass


class PreconditionError(OmniviewError, ValueError):
    """An operation was applied to inputs that violate its precondition."""
    pass


class AnnotationParseError(OmniviewError):
    """Annotation source could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column or 0})"
        super().__init__(message)


class SchemaError(OmniviewError):
    """Annotation or record content does not satisfy the expected schema."""
    pass


class AssemblyError(OmniviewError):
    """A dataset split could not be assembled from its sources."""
    pass


class RecipeLookupError(OmniviewError, KeyError):
    """No bundled training recipe or reference result matches the key."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


class ImageIOError(OmniviewError):
    """An image could not be read or encoded."""
    pass
