"""
Test script to verify geometric value types, orientation and chain sorting
"""

import math

import pytest

from chain_counter.enums import Axis
from chain_counter.exceptions import PreconditionError
from chain_counter.geometry import (
    BBox,
    Detection,
    ImageRecord,
    Point2D,
    dominant_orientation,
    points_to_array,
    sort_along,
)


def pts(*xy):
    return [Point2D(x, y) for x, y in xy]


def test_dominant_orientation_cases():
    assert dominant_orientation(pts((0, 0), (10, 1), (20, 0))) is Axis.X
    assert dominant_orientation(pts((0, 0), (1, 10))) is Axis.Y
    # equal spread falls to Y
    assert dominant_orientation(pts((3, 3))) is Axis.Y
    assert dominant_orientation(pts((0, 0), (5, 5))) is Axis.Y
    assert dominant_orientation(pts((0, 0), (5.0000001, 5))) is Axis.X


def test_dominant_orientation_rejects_empty():
    with pytest.raises(PreconditionError):
        dominant_orientation([])


def test_sort_along_cases():
    assert sort_along(pts((5, 0), (1, 0), (3, 0)), Axis.X) == [1, 2, 0]
    assert sort_along([], Axis.X) == []
    assert sort_along(pts((2, 9), (2, 1)), Axis.X) == [1, 0]
    assert sort_along(pts((0, 5), (9, 1), (4, 3)), Axis.Y) == [1, 2, 0]


def test_sort_along_coincident_points_keep_input_order():
    assert sort_along(pts((1, 1), (1, 1), (0, 0), (1, 1)), Axis.X) == [2, 0, 1, 3]


def test_sort_along_is_a_permutation_and_sorted():
    points = pts((7, 2), (1, 8), (4, 4), (4, 1), (0, 9))
    for axis in Axis:
        order = sort_along(points, axis)
        assert sorted(order) == list(range(len(points)))
        coords = [points[i].coord(axis) for i in order]
        assert coords == sorted(coords)


def test_axis_other():
    assert Axis.X.other is Axis.Y
    assert Axis.Y.other is Axis.X


def test_point_rejects_non_finite():
    with pytest.raises(PreconditionError):
        Point2D(math.nan, 0.0)
    with pytest.raises(PreconditionError):
        Point2D(0.0, math.inf)


def test_bbox_corners_and_containment():
    box = BBox.from_corners(10, 20, 30, 60)
    assert (box.cx, box.cy, box.w, box.h) == (20, 40, 20, 40)
    assert (box.x1, box.y1, box.x2, box.y2) == (10, 20, 30, 60)
    assert box.area == 800
    assert box.contains(Point2D(10, 20))
    assert box.contains(Point2D(30, 60))
    assert not box.contains(Point2D(30.001, 40))
    assert box.translated(1, -1).center() == Point2D(21, 39)


@pytest.mark.parametrize("w,h", [(0, 1), (1, 0), (-2, 3)])
def test_bbox_rejects_non_positive_size(w, h):
    with pytest.raises(PreconditionError):
        BBox(0, 0, w, h)


@pytest.mark.parametrize("score", [-0.01, 1.01, math.nan])
def test_detection_score_range(score):
    with pytest.raises(PreconditionError):
        Detection(BBox(5, 5, 2, 2), score)


def test_detection_score_bounds_inclusive():
    assert Detection(BBox(5, 5, 2, 2), 0.0).score == 0.0
    assert Detection(BBox(5, 5, 2, 2), 1.0).score == 1.0


def test_image_record_validation():
    with pytest.raises(PreconditionError):
        ImageRecord("a", 0, 10)
    with pytest.raises(PreconditionError):
        ImageRecord("a", 10, 10, ground_truth=[BBox(11, 5, 2, 2)])
    with pytest.raises(PreconditionError):
        ImageRecord("a", 10, 10, ground_truth=[BBox(5, 5, 2, 2)], gt_count=1)
    with pytest.raises(PreconditionError):
        ImageRecord("a", 10, 10, gt_count=-1)
    # centers on the border are inside; boxes may stick out
    rec = ImageRecord("a", 10, 10, ground_truth=[BBox(10, 0, 6, 6)])
    assert rec.n_gt == 1


def test_image_record_counts():
    rec = ImageRecord(
        "r",
        100,
        50,
        predictions=[Detection(BBox(10, 10, 4, 4), 0.5), Detection(BBox(20, 10, 4, 4), 0.7)],
        ground_truth=[BBox(11, 10, 4, 4)],
    )
    assert rec.n_pred == 2 and rec.n_gt == 1 and rec.has_instances
    assert isinstance(rec.predictions, tuple)
    assert rec.pred_centers() == [Point2D(10, 10), Point2D(20, 10)]
    assert rec.with_predictions([]).n_pred == 0

    count_only = ImageRecord("c", 100, 50, gt_count=7)
    assert count_only.n_gt == 7 and not count_only.has_instances


def test_points_to_array_shape():
    assert points_to_array([]).shape == (0, 2)
    arr = points_to_array(pts((1, 2), (3, 4)))
    assert arr.tolist() == [[1.0, 2.0], [3.0, 4.0]]
