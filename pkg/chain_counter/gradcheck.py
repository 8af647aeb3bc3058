"""
Finite-difference checking of the composite-loss gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assignment import FocalParams, hungarian, value_matrix_from_arrays
from .geometry import Point2D, dominant_orientation
from .losses import (
    ChainInstance,
    LossWeights,
    neighbor_gaps,
    pair_index_arrays,
    composite_loss,
    composite_loss_gradient,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradCheckResult:
    """Outcome of comparing analytic and numerical gradients."""

    max_rel_error: float
    n_checked: int
    n_skipped_kinks: int

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def finite_difference_gradient(
    func: Callable[[np.ndarray], float], x0: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Centered-difference gradient of func at x0."""
    x0 = np.asarray(x0, dtype=float)
    flat = x0.ravel()
    grad = np.zeros_like(flat)
    for j in range(flat.size):
        x = flat.copy()
        x[j] = flat[j] + step
        f_plus = func(x.reshape(x0.shape))
        x[j] = flat[j] - step
        f_minus = func(x.reshape(x0.shape))
        grad[j] = (f_plus - f_minus) / (2 * step)
    return grad.reshape(x0.shape)


def _kink_mask(inst: ChainInstance, tol: float) -> np.ndarray:
    """(n_pred, 2) mask of center coordinates sitting within tol of a |.| kink."""
    pred = inst.pred_array()
    mask = np.zeros(pred.shape, dtype=bool)
    pi, gi = pair_index_arrays(inst.matching.pairs)
    if len(pi):
        mask[pi] |= np.abs(pred[pi] - inst.gt_array()[gi]) < tol
    if len(pi) >= 2:
        order, _, dp, dg = neighbor_gaps(inst)
        bad_gap = (np.abs(dp - dg) < tol) | (dp < tol)
        for k in np.flatnonzero(bad_gap):
            mask[order[k]] = True
            mask[order[k + 1]] = True
    return mask


def gradient_check(
    inst: ChainInstance,
    weights: LossWeights = LossWeights(),
    params: FocalParams = FocalParams(),
    step: float = 1e-5,
    kink_tol: float = 1e-4,
) -> GradCheckResult:
    """
    Compare composite_loss_gradient against centered finite differences.

    The relative error of one coordinate is |a - n| / max(1, |a|, |n|).
    Center coordinates within kink_tol of a |.| kink are skipped.
    """
    grad_centers, grad_scores = composite_loss_gradient(inst, weights, params)
    centers0 = inst.pred_array()
    scores0 = inst.score_array()

    def total_at_centers(c: np.ndarray) -> float:
        return composite_loss(inst.with_predictions(c, scores0), weights, params).total

    def total_at_scores(s: np.ndarray) -> float:
        return composite_loss(inst.with_predictions(centers0, s), weights, params).total

    numeric_centers = finite_difference_gradient(total_at_centers, centers0, step)
    numeric_scores = finite_difference_gradient(total_at_scores, scores0, step)

    skip = _kink_mask(inst, kink_tol)
    analytic = np.concatenate([grad_centers[~skip], grad_scores])
    numeric = np.concatenate([numeric_centers[~skip], numeric_scores])
    if analytic.size:
        scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        max_rel = float(np.max(np.abs(analytic - numeric) / scale))
    else:
        max_rel = 0.0
    result = GradCheckResult(
        max_rel_error=max_rel, n_checked=int(analytic.size), n_skipped_kinks=int(skip.sum())
    )
    logger.debug(f"Gradient check: {result}")
    return result


def random_chain_instance(
    rng: np.random.Generator,
    n_points: int,
    extent: float = 800.0,
    jitter: float = 5.0,
    params: FocalParams = FocalParams(),
) -> ChainInstance:
    """
    Random instance: n_points ground-truth centers in [0, extent]^2, jittered
    predictions plus up to two extra unmatched ones, scores in [0.05, 0.95].
    """
    gt = rng.uniform(0.0, extent, size=(n_points, 2))
    n_extra = int(rng.integers(0, 3))
    pred = np.vstack(
        [gt + rng.normal(0.0, jitter, size=gt.shape), rng.uniform(0.0, extent, size=(n_extra, 2))]
    )
    scores = rng.uniform(0.05, 0.95, size=len(pred))

    matching = hungarian(value_matrix_from_arrays(pred, scores, gt, params))
    gt_points = [Point2D(float(x), float(y)) for x, y in gt]
    return ChainInstance(
        pred_centers=[Point2D(float(x), float(y)) for x, y in pred],
        pred_scores=scores.tolist(),
        gt_centers=gt_points,
        matching=matching,
        axis=dominant_orientation(gt_points),
    )
