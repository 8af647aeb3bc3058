"""
Geometric value types and the dominant-orientation rule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .enums import Axis
from .exceptions import PreconditionError

logger = logging.getLogger(__name__)


def _require_finite(name: str, *values: float) -> None:
    for value in values:
        if not math.isfinite(value):
            raise PreconditionError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Point2D:
    """A point in image coordinates (origin top-left, pixels)."""

    x: float
    y: float

    def __post_init__(self):
        _require_finite("Point2D coordinates", self.x, self.y)

    def coord(self, axis: Axis) -> float:
        return self.x if axis is Axis.X else self.y

    def translated(self, dx: float, dy: float) -> Point2D:
        return Point2D(self.x + dx, self.y + dy)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box stored as center and size."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        _require_finite("BBox fields", self.cx, self.cy, self.w, self.h)
        if self.w <= 0 or self.h <= 0:
            raise PreconditionError(f"BBox size must be positive, got {self.w}x{self.h}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> BBox:
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    def center(self) -> Point2D:
        return Point2D(self.cx, self.cy)

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, point: Point2D) -> bool:
        """Closed containment: points on the boundary are inside."""
        return self.x1 <= point.x <= self.x2 and self.y1 <= point.y <= self.y2

    def translated(self, dx: float, dy: float) -> BBox:
        return replace(self, cx=self.cx + dx, cy=self.cy + dy)


@dataclass(frozen=True)
class Detection:
    """A predicted handle: box plus confidence."""

    box: BBox
    score: float

    def __post_init__(self):
        _require_finite("Detection score", self.score)
        if not 0.0 <= self.score <= 1.0:
            raise PreconditionError(f"Detection score must lie in [0, 1], got {self.score}")

    def center(self) -> Point2D:
        return self.box.center()

    def translated(self, dx: float, dy: float) -> Detection:
        return Detection(self.box.translated(dx, dy), self.score)


@dataclass(frozen=True)
class ImageRecord:
    """
    One image's size, predictions and ground truth; the unit of evaluation.

    gt_count marks a count-only annotation: the number of handles is known
    but no instance boxes are, so ground_truth stays empty.
    """

    id: str
    width: float
    height: float
    predictions: Tuple[Detection, ...] = field(default_factory=tuple)
    ground_truth: Tuple[BBox, ...] = field(default_factory=tuple)
    gt_count: Optional[int] = None

    def __post_init__(self):
        _require_finite("ImageRecord size", self.width, self.height)
        if self.width <= 0 or self.height <= 0:
            raise PreconditionError(
                f"record {self.id}: image size must be positive, got {self.width}x{self.height}"
            )
        # Lists are accepted for convenience and frozen to tuples.
        object.__setattr__(self, "predictions", tuple(self.predictions))
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        if self.gt_count is not None and (self.gt_count < 0 or self.ground_truth):
            raise PreconditionError(
                f"record {self.id}: gt_count needs a non-negative value and no ground-truth boxes"
            )
        for box in [d.box for d in self.predictions] + list(self.ground_truth):
            if not (0 <= box.cx <= self.width and 0 <= box.cy <= self.height):
                raise PreconditionError(
                    f"record {self.id}: box center ({box.cx}, {box.cy}) lies outside "
                    f"[0, {self.width}] x [0, {self.height}]"
                )

    @property
    def n_pred(self) -> int:
        return len(self.predictions)

    @property
    def n_gt(self) -> int:
        return self.gt_count if self.gt_count is not None else len(self.ground_truth)

    @property
    def has_instances(self) -> bool:
        return self.gt_count is None

    def pred_centers(self) -> List[Point2D]:
        return [d.center() for d in self.predictions]

    def gt_centers(self) -> List[Point2D]:
        return [b.center() for b in self.ground_truth]

    def with_predictions(self, predictions: Iterable[Detection]) -> ImageRecord:
        return replace(self, predictions=tuple(predictions))


def points_to_array(points: Sequence[Point2D]) -> np.ndarray:
    """Stack points into an (n, 2) float array."""
    if not points:
        return np.zeros((0, 2), dtype=float)
    return np.array([[p.x, p.y] for p in points], dtype=float)


def dominant_orientation(points: Sequence[Point2D]) -> Axis:
    """
    Axis along which the points spread the most.

    X is returned only when the x-spread is strictly larger than the
    y-spread; equal spreads (including a single point) give Y.
    """
    if not points:
        raise PreconditionError("dominant_orientation needs at least one point")
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    if (max(xs) - min(xs)) > (max(ys) - min(ys)):
        return Axis.X
    return Axis.Y


def sort_along(points: Sequence[Point2D], axis: Axis) -> List[int]:
    """
    Permutation sorting points ascending along axis.

    Ties fall back to the other coordinate and then the original index.
    """
    other = axis.other
    return sorted(
        range(len(points)),
        key=lambda i: (points[i].coord(axis), points[i].coord(other), i),
    )
