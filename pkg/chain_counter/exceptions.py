"""
Exception hierarchy for the chain counting toolkit.
"""

from typing import Optional


class ChainCounterError(Exception):
    """Base class for every error raised by the package."""


class PreconditionError(ChainCounterError, ValueError):
    """An operation was called with inputs outside its domain."""


class SizeLimitError(PreconditionError):
    """Exhaustive search refused because the problem is too large."""


class LayoutError(PreconditionError):
    """A synthetic layout does not fit inside the requested image."""

    def __init__(self, message: str, min_width: float, min_height: float):
        super().__init__(f"{message} (requires at least {min_width:g}x{min_height:g} px)")
        self.message = message
        self.min_width = min_width
        self.min_height = min_height

    def __reduce__(self):
        return (type(self), (self.message, self.min_width, self.min_height))


class DatasetParseError(ChainCounterError, ValueError):
    """A dataset line could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")
        self.message = message
        self.line_number = line_number

    def __reduce__(self):
        return (type(self), (self.message, self.line_number))


class RefineDivergenceError(ChainCounterError, ArithmeticError):
    """Refinement produced a non-finite loss."""

    def __init__(self, step: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at step {step}")
        self.message = message
        self.step = step

    def __reduce__(self):
        return (type(self), (self.step, self.message))


class CounterError(ChainCounterError, RuntimeError):
    """A counter failed on a slice during two-pass counting."""

    def __init__(self, slice_index: int, cause: str):
        super().__init__(f"counter failed on slice {slice_index}: {cause}")
        self.slice_index = slice_index
        self.cause = cause

    def __reduce__(self):
        return (type(self), (self.slice_index, self.cause))
