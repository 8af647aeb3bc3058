"""
Deterministic synthetic chain layouts and corrupted predictions.

All randomness comes from numpy's default_rng (PCG64) seeded from the scene settings,
so the same settings and seed always produce the same record.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .enums import Axis
from .exceptions import LayoutError, PreconditionError
from .geometry import BBox, Detection, ImageRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneSpec:
    """Layout of handle chains inside one image."""

    width: float = 1200.0
    height: float = 400.0
    n_clusters: int = 2
    handles_per_cluster: Tuple[int, int] = (8, 12)
    spacing: float = 30.0
    spacing_jitter: float = 0.0
    inter_cluster_gap: float = 200.0
    axis: Axis = Axis.X
    handle_w: float = 20.0
    handle_h: float = 20.0
    cross_jitter: float = 0.0
    seed: int = 0
    id: str = "scene-0"

    def __post_init__(self):
        lo, hi = self.handles_per_cluster
        if self.n_clusters < 1 or lo < 1 or hi < lo:
            raise PreconditionError(
                f"need n_clusters >= 1 and 1 <= min <= max handles, got "
                f"{self.n_clusters} x {self.handles_per_cluster}"
            )
        if not 0 <= self.spacing_jitter < self.spacing:
            raise PreconditionError("spacing_jitter must lie in [0, spacing)")
        if self.n_clusters > 1 and self.inter_cluster_gap <= self.spacing + self.spacing_jitter:
            raise PreconditionError(
                "inter_cluster_gap must exceed the largest intra-cluster spacing "
                f"({self.spacing + self.spacing_jitter:g})"
            )
        if self.handle_w <= 0 or self.handle_h <= 0 or self.cross_jitter < 0:
            raise PreconditionError("handle size must be positive and cross_jitter >= 0")


@dataclass(frozen=True)
class CorruptionSpec:
    """Failure modes applied to ground truth to produce predictions."""

    center_jitter_sigma: float = 0.0
    dropout_rate: float = 0.0
    duplicate_rate: float = 0.0
    false_positive_rate: float = 0.0
    duplicate_offset: float = 3.0
    true_score_mean: float = 1.0
    true_score_std: float = 0.0
    fp_score_mean: float = 0.15
    fp_score_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("dropout_rate", "duplicate_rate", "false_positive_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise PreconditionError(f"{name} must lie in [0, 1], got {value}")
        spreads = (
            self.center_jitter_sigma,
            self.duplicate_offset,
            self.true_score_std,
            self.fp_score_std,
        )
        if min(spreads) < 0:
            raise PreconditionError("jitter, offsets and score spreads must be >= 0")


def _along_positions(spec: SceneSpec, rng: np.random.Generator) -> List[List[float]]:
    """Positions along the chain axis, one list per cluster, starting at 0."""
    lo, hi = spec.handles_per_cluster
    clusters: List[List[float]] = []
    cursor = 0.0
    for k in range(spec.n_clusters):
        if k:
            cursor += spec.inter_cluster_gap
        n = int(rng.integers(lo, hi + 1))
        steps = spec.spacing + rng.uniform(-spec.spacing_jitter, spec.spacing_jitter, size=n - 1)
        positions = cursor + np.concatenate([[0.0], np.cumsum(steps)])
        clusters.append(positions.tolist())
        cursor = float(positions[-1])
    return clusters


def generate_scene(spec: SceneSpec) -> ImageRecord:
    """Ground-truth-only record with n_clusters chains laid out along spec.axis."""
    rng = np.random.default_rng(spec.seed)
    clusters = _along_positions(spec, rng)
    length = clusters[-1][-1]

    if spec.axis is Axis.X:
        along_size, cross_size = spec.handle_w, spec.handle_h
        along_limit, cross_limit = spec.width, spec.height
    else:
        along_size, cross_size = spec.handle_h, spec.handle_w
        along_limit, cross_limit = spec.height, spec.width
    need_along = length + along_size
    need_cross = cross_size + 2 * spec.cross_jitter
    if need_along > along_limit or need_cross > cross_limit:
        need_w, need_h = (need_along, need_cross)
        if spec.axis is Axis.Y:
            need_w, need_h = need_cross, need_along
        raise LayoutError(
            f"layout of {sum(len(c) for c in clusters)} handles does not fit "
            f"{spec.width:g}x{spec.height:g}",
            min_width=need_w,
            min_height=need_h,
        )

    start = (along_limit - length) / 2
    middle = cross_limit / 2
    boxes = []
    for positions in clusters:
        for along in positions:
            cross = middle + rng.uniform(-spec.cross_jitter, spec.cross_jitter)
            a = start + along
            cx, cy = (a, cross) if spec.axis is Axis.X else (cross, a)
            boxes.append(BBox(cx, cy, spec.handle_w, spec.handle_h))

    logger.debug(f"Generated scene {spec.id}: {len(boxes)} handles in {len(clusters)} clusters")
    return ImageRecord(spec.id, spec.width, spec.height, predictions=(), ground_truth=boxes)


def _clip_center(box: BBox, width: float, height: float) -> BBox:
    return BBox(min(max(box.cx, 0.0), width), min(max(box.cy, 0.0), height), box.w, box.h)


def _score(rng: np.random.Generator, mean: float, std: float) -> float:
    return float(np.clip(mean + std * rng.standard_normal(), 0.0, 1.0))


def corrupt(record: ImageRecord, spec: CorruptionSpec) -> ImageRecord:
    """
    Fill predictions from ground truth: jitter, dropout, near-duplicates and
    false positives, in that order. Every ground-truth box consumes the same
    random draws whatever the rates, so changing one rate does not reshuffle
    the others. Centers are clipped to the image.
    """
    rng = np.random.default_rng(spec.seed)
    preds: List[Detection] = []
    for gt in record.ground_truth:
        drop = rng.random() < spec.dropout_rate
        offset = spec.center_jitter_sigma * rng.standard_normal(2)
        score = _score(rng, spec.true_score_mean, spec.true_score_std)
        duplicate = rng.random() < spec.duplicate_rate
        dup_offset = spec.duplicate_offset * rng.standard_normal(2)
        dup_factor = rng.uniform(0.5, 1.0)
        if drop:
            continue
        box = _clip_center(gt.translated(offset[0], offset[1]), record.width, record.height)
        preds.append(Detection(box, score))
        if duplicate:
            dup_box = _clip_center(
                box.translated(dup_offset[0], dup_offset[1]), record.width, record.height
            )
            preds.append(Detection(dup_box, score * dup_factor))

    n_fp = 0
    if record.ground_truth:
        n_fp = int(rng.binomial(len(record.ground_truth), spec.false_positive_rate))
    if n_fp:
        w = float(np.median([b.w for b in record.ground_truth]))
        h = float(np.median([b.h for b in record.ground_truth]))
        for _ in range(n_fp):
            cx, cy = rng.uniform(0.0, record.width), rng.uniform(0.0, record.height)
            fp_score = _score(rng, spec.fp_score_mean, spec.fp_score_std)
            preds.append(Detection(BBox(cx, cy, w, h), fp_score))

    return record.with_predictions(preds)


def jittered_chain(
    n_points: int = 20,
    spacing: float = 30.0,
    jitter: float = 2.0,
    score: float = 0.9,
    seed: int = 0,
    axis: Axis = Axis.X,
) -> ImageRecord:
    """
    One straight chain with predictions displaced uniformly by up to
    +-jitter pixels in each coordinate; the refinement experiment scene.
    """
    margin = 100.0
    along = spacing * (n_points - 1) + 2 * margin
    width, height = (along, 2 * margin) if axis is Axis.X else (2 * margin, along)
    scene = generate_scene(
        SceneSpec(
            width=width,
            height=height,
            n_clusters=1,
            handles_per_cluster=(n_points, n_points),
            spacing=spacing,
            axis=axis,
            seed=seed,
            id=f"chain-{seed}",
        )
    )
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-jitter, jitter, size=(n_points, 2))
    preds = [
        Detection(gt.translated(float(dx), float(dy)), score)
        for gt, (dx, dy) in zip(scene.ground_truth, offsets)
    ]
    return scene.with_predictions(preds)
