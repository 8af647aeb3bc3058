"""
Enums for the chain counting toolkit.
"""

from enum import Enum


class Axis(Enum):
    """Dominant image axis along which a visual chain is read."""

    X = 0  # left to right
    Y = 1  # top to bottom

    @property
    def other(self) -> "Axis":
        return Axis.Y if self is Axis.X else Axis.X


class CounterKind(Enum):
    """Counter implementations selectable from the command line."""

    ORACLE = "oracle"  # ground truth restricted to the crop
    NOISY = "noisy"  # ground truth passed through the corruption model
    FILE = "file"  # precomputed outputs keyed by crop id
