"""
Duplicate-detection removal along the dominant axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

from .enums import Axis
from .exceptions import PreconditionError
from .geometry import Detection, dominant_orientation, sort_along

logger = logging.getLogger(__name__)

DEFAULT_CONFIDENCE_THRESHOLD = 0.26


@dataclass(frozen=True)
class DedupConfig:
    """Dedup parameters; distance_threshold has no default."""

    distance_threshold: float
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD

    def __post_init__(self):
        if not self.distance_threshold > 0:
            raise PreconditionError(
                f"distance_threshold must be > 0, got {self.distance_threshold}"
            )
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise PreconditionError(
                f"confidence_threshold must lie in [0, 1], got {self.confidence_threshold}"
            )


def filter_by_confidence(dets: Sequence[Detection], sigma: float) -> List[Detection]:
    """Keep detections with score >= sigma, in input order."""
    return [d for d in dets if d.score >= sigma]


def _axis_gap(a: Detection, b: Detection, axis: Axis) -> float:
    return abs(a.center().coord(axis) - b.center().coord(axis))


def dedup(dets: Sequence[Detection], cfg: DedupConfig, axis: Axis) -> List[Detection]:
    """
    Sweep detections sorted along axis and collapse every neighbor pair closer
    than cfg.distance_threshold (measured along axis) onto its higher-confidence
    member, until no such pair remains. Equal scores keep the earlier detection.
    """
    order = sort_along([d.center() for d in dets], axis)
    items = [dets[i] for i in order]

    sweeps = 0
    changed = True
    while changed:
        changed = False
        kept: List[Detection] = []
        for det in items:
            if kept and _axis_gap(det, kept[-1], axis) < cfg.distance_threshold:
                if det.score > kept[-1].score:
                    kept[-1] = det
                changed = True
            else:
                kept.append(det)
        items = kept
        sweeps += 1

    if len(items) < len(dets):
        logger.debug(
            f"Dedup removed {len(dets) - len(items)} of {len(dets)} detections in {sweeps} sweeps"
        )
    return items


def postprocess(
    dets: Sequence[Detection], cfg: DedupConfig, axis: Optional[Axis] = None
) -> List[Detection]:
    """Confidence filtering followed by dedup; the axis defaults to the dominant one."""
    kept = filter_by_confidence(dets, cfg.confidence_threshold)
    if not kept:
        return []
    if axis is None:
        axis = dominant_orientation([d.center() for d in kept])
    return dedup(kept, cfg, axis)
