"""
Gap-based clustering of detections and two-pass divide-and-conquer counting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist

from .counters import Counter
from .exceptions import CounterError, PreconditionError
from .geometry import (
    BBox,
    Detection,
    ImageRecord,
    Point2D,
    dominant_orientation,
    points_to_array,
    sort_along,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionConfig:
    """Clustering and stitching parameters; gap_threshold has no default."""

    gap_threshold: float
    padding: float = 0.0
    merge_distance: float = 1.0
    n_jobs: int = 1

    def __post_init__(self):
        if not self.gap_threshold > 0:
            raise PreconditionError(f"gap_threshold must be > 0, got {self.gap_threshold}")
        if self.padding < 0:
            raise PreconditionError(f"padding must be >= 0, got {self.padding}")
        if not self.merge_distance > 0:
            raise PreconditionError(f"merge_distance must be > 0, got {self.merge_distance}")


@dataclass(frozen=True)
class CropRegion:
    """Axis-aligned rectangle in image coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def contains(self, point: Point2D) -> bool:
        return self.x1 <= point.x <= self.x2 and self.y1 <= point.y <= self.y2

    def covers(self, other: CropRegion) -> bool:
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and self.x2 >= other.x2
            and self.y2 >= other.y2
        )


@dataclass(frozen=True)
class ClusterSlice:
    """Members of one cluster and the crop that holds them."""

    member_indices: Tuple[int, ...]
    crop_region: CropRegion


def full_region(record: ImageRecord) -> CropRegion:
    return CropRegion(0.0, 0.0, record.width, record.height)


def cluster_by_gap(points: Sequence[Point2D], gap_threshold: float) -> List[range]:
    """
    Split sorted points wherever consecutive points are farther apart than
    gap_threshold (Euclidean). The ranges partition 0..n-1 contiguously.
    """
    if not gap_threshold > 0:
        raise PreconditionError(f"gap_threshold must be > 0, got {gap_threshold}")
    n = len(points)
    if n == 0:
        return []
    xy = points_to_array(points)
    gaps = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    breaks = (np.flatnonzero(gaps > gap_threshold) + 1).tolist()
    bounds = [0] + breaks + [n]
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def slice_image(
    record: ImageRecord, clusters: Sequence[Sequence[int]], padding: float = 0.0
) -> List[ClusterSlice]:
    """
    One slice per cluster of record.predictions: the members' bounding
    rectangle grown by padding and clipped to the image. An empty cluster
    yields the full image.
    """
    if padding < 0:
        raise PreconditionError(f"padding must be >= 0, got {padding}")
    slices = []
    for members in clusters:
        members = tuple(int(i) for i in members)
        if not members:
            slices.append(ClusterSlice(members, full_region(record)))
            continue
        for i in members:
            if not 0 <= i < record.n_pred:
                raise PreconditionError(f"cluster member {i} is not a detection of {record.id}")
        boxes = [record.predictions[i].box for i in members]
        region = CropRegion(
            x1=max(0.0, min(b.x1 for b in boxes) - padding),
            y1=max(0.0, min(b.y1 for b in boxes) - padding),
            x2=min(record.width, max(b.x2 for b in boxes) + padding),
            y2=min(record.height, max(b.y2 for b in boxes) + padding),
        )
        slices.append(ClusterSlice(members, region))
    return slices


def crop_record(record: ImageRecord, region: CropRegion, crop_id: str) -> ImageRecord:
    """Record restricted to region, in crop-local coordinates."""
    inside = [b for b in record.ground_truth if region.contains(b.center())]
    preds = [d for d in record.predictions if region.contains(d.center())]
    return ImageRecord(
        id=crop_id,
        width=region.width,
        height=region.height,
        predictions=[d.translated(-region.x1, -region.y1) for d in preds],
        ground_truth=[b.translated(-region.x1, -region.y1) for b in inside],
    )


def _run_counter(counter: Counter, crop: ImageRecord, slice_index: int) -> List[Detection]:
    try:
        dets = counter.count(crop)
    except Exception as e:
        raise CounterError(slice_index, f"{type(e).__name__}: {e}") from e
    for det in dets:
        c = det.center()
        if not (0 <= c.x <= crop.width and 0 <= c.y <= crop.height):
            raise CounterError(slice_index, f"detection at ({c.x}, {c.y}) lies outside the crop")
    return dets


def single_pass_count(record: ImageRecord, counter: Counter) -> List[Detection]:
    """Run the counter once on the full image."""
    crop = crop_record(record, full_region(record), f"{record.id}/full")
    return _run_counter(counter, crop, -1)


def first_pass_slices(
    record: ImageRecord, first: Sequence[Detection], cfg: PartitionConfig
) -> List[ClusterSlice]:
    """Cluster first-pass detections and cut one slice per cluster."""
    if not first:
        logger.warning(f"[WARNING] {record.id}: first pass found nothing; using the full image")
        return [ClusterSlice((), full_region(record))]
    centers = [d.center() for d in first]
    order = sort_along(centers, dominant_orientation(centers))
    ranges = cluster_by_gap([centers[i] for i in order], cfg.gap_threshold)
    clusters = [[order[k] for k in r] for r in ranges]
    return slice_image(record.with_predictions(first), clusters, cfg.padding)


def _to_global(det: Detection, region: CropRegion, record: ImageRecord) -> Detection:
    moved = det.translated(region.x1, region.y1)
    cx = min(max(moved.box.cx, 0.0), record.width)
    cy = min(max(moved.box.cy, 0.0), record.height)
    return Detection(BBox(cx, cy, moved.box.w, moved.box.h), moved.score)


def _merge_boundaries(
    stitched: List[Detection],
    origins: Sequence[int],
    slices: Sequence[ClusterSlice],
    cfg: PartitionConfig,
) -> List[Detection]:
    """
    Merge detections that fall inside more than one crop: a detection is
    dropped when a higher-scoring one from a different crop lies within
    cfg.merge_distance (Euclidean). Equal scores keep the earlier crop.
    """
    shared, alone = [], []
    for det, origin in zip(stitched, origins):
        hits = sum(s.crop_region.contains(det.center()) for s in slices)
        (shared if hits > 1 else alone).append((det, origin))
    if not shared:
        return [d for d, _ in alone]

    xy = points_to_array([d.center() for d, _ in shared])
    close = cdist(xy, xy) <= cfg.merge_distance
    order = sorted(range(len(shared)), key=lambda k: -shared[k][0].score)
    kept: List[int] = []
    for k in order:
        if not any(close[k, j] and shared[j][1] != shared[k][1] for j in kept):
            kept.append(k)
    if len(kept) < len(shared):
        logger.debug(f"Merged {len(shared) - len(kept)} boundary duplicates")
    return [d for d, _ in alone] + [shared[k][0] for k in sorted(kept)]


@dataclass(frozen=True)
class TwoPassResult:
    """Everything two-pass counting produced for one record."""

    first: List[Detection]
    slices: List[ClusterSlice]
    detections: List[Detection]


def two_pass(record: ImageRecord, counter: Counter, cfg: PartitionConfig) -> TwoPassResult:
    """
    Count the full image, cluster the detections by gap, recount every
    cluster crop and stitch the crops back together in global coordinates.

    Raises:
        CounterError: the counter failed on a slice (full image is slice -1).
    """
    first = single_pass_count(record, counter)
    slices = first_pass_slices(record, first, cfg)
    crops = [
        crop_record(record, s.crop_region, f"{record.id}/{k}") for k, s in enumerate(slices)
    ]
    per_slice = Parallel(n_jobs=cfg.n_jobs)(
        delayed(_run_counter)(counter, crop, k) for k, crop in enumerate(crops)
    )

    stitched, origins = [], []
    for k, (s, dets) in enumerate(zip(slices, per_slice)):
        for d in dets:
            stitched.append(_to_global(d, s.crop_region, record))
            origins.append(k)

    result = _merge_boundaries(stitched, origins, slices, cfg)
    centers = [d.center() for d in result]
    if centers:
        result = [result[i] for i in sort_along(centers, dominant_orientation(centers))]
    logger.info(
        f"{record.id}: first pass {len(first)}, {len(slices)} slices, stitched count {len(result)}"
    )
    return TwoPassResult(first=list(first), slices=slices, detections=result)


def two_pass_count(record: ImageRecord, counter: Counter, cfg: PartitionConfig) -> List[Detection]:
    """Stitched detections of two-pass counting."""
    return two_pass(record, counter, cfg).detections
