"""
Training objective for visual chains: localization, neighboring and focal
classification losses, their weighted composite, and analytic gradients.

Gradients are taken with the assignment held fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .assignment import FocalParams, MatchResult, build_value_matrix, focal_branches, hungarian
from .enums import Axis
from .exceptions import PreconditionError
from .geometry import (
    ImageRecord,
    Point2D,
    dominant_orientation,
    points_to_array,
    sort_along,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the composite objective."""

    lambda_loc: float = 10.0
    lambda_neigh: float = 100.0
    lambda_cls: float = 1.0

    def __post_init__(self):
        for name in ("lambda_loc", "lambda_neigh", "lambda_cls"):
            if getattr(self, name) < 0:
                raise PreconditionError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class LossBreakdown:
    """Individual loss terms and their weighted total."""

    loc: float
    neigh: float
    cls: float
    total: float

    def to_dict(self):
        return {"loc": self.loc, "neigh": self.neigh, "cls": self.cls, "total": self.total}


@dataclass(frozen=True)
class ChainInstance:
    """Predicted and ground-truth centers tied together by a fixed matching."""

    pred_centers: Tuple[Point2D, ...]
    pred_scores: Tuple[float, ...]
    gt_centers: Tuple[Point2D, ...]
    matching: MatchResult
    axis: Axis

    def __post_init__(self):
        object.__setattr__(self, "pred_centers", tuple(self.pred_centers))
        object.__setattr__(self, "pred_scores", tuple(float(s) for s in self.pred_scores))
        object.__setattr__(self, "gt_centers", tuple(self.gt_centers))
        if len(self.pred_centers) != len(self.pred_scores):
            raise PreconditionError("pred_centers and pred_scores differ in length")
        for i, j in self.matching.pairs:
            if not (0 <= i < len(self.pred_centers) and 0 <= j < len(self.gt_centers)):
                raise PreconditionError(f"matching pair ({i}, {j}) is out of range")

    @classmethod
    def from_record(
        cls, record: ImageRecord, params: FocalParams = FocalParams()
    ) -> ChainInstance:
        """Match a record's predictions to its ground truth and orient the chain."""
        matching = hungarian(build_value_matrix(record.predictions, record.ground_truth, params))
        reference = record.gt_centers() or record.pred_centers()
        axis = dominant_orientation(reference) if reference else Axis.Y
        return cls(
            pred_centers=record.pred_centers(),
            pred_scores=[d.score for d in record.predictions],
            gt_centers=record.gt_centers(),
            matching=matching,
            axis=axis,
        )

    def pred_array(self) -> np.ndarray:
        return points_to_array(self.pred_centers)

    def gt_array(self) -> np.ndarray:
        return points_to_array(self.gt_centers)

    def score_array(self) -> np.ndarray:
        return np.asarray(self.pred_scores, dtype=float)

    def with_predictions(
        self, centers: np.ndarray, scores: Sequence[float], matching: Optional[MatchResult] = None
    ) -> ChainInstance:
        return ChainInstance(
            pred_centers=[Point2D(float(x), float(y)) for x, y in centers],
            pred_scores=list(scores),
            gt_centers=self.gt_centers,
            matching=self.matching if matching is None else matching,
            axis=self.axis,
        )


def chain_order(inst: ChainInstance) -> List[Tuple[int, int]]:
    """Matched pairs ordered by ground-truth center along the chain axis."""
    pairs = list(inst.matching.pairs)
    order = sort_along([inst.gt_centers[j] for _, j in pairs], inst.axis)
    return [pairs[k] for k in order]


def pair_index_arrays(pairs: Sequence[Tuple[int, int]]) -> Tuple[np.ndarray, np.ndarray]:
    if not pairs:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    idx = np.asarray(pairs, dtype=int)
    return idx[:, 0], idx[:, 1]


def neighbor_gaps(inst: ChainInstance):
    """Consecutive pred/gt gap vectors and lengths along the chain."""
    pi, gi = pair_index_arrays(chain_order(inst))
    pred = inst.pred_array()[pi] if len(pi) else np.zeros((0, 2))
    gt = inst.gt_array()[gi] if len(gi) else np.zeros((0, 2))
    dp_vec = np.diff(pred, axis=0)
    dg_vec = np.diff(gt, axis=0)
    return pi, dp_vec, np.linalg.norm(dp_vec, axis=1), np.linalg.norm(dg_vec, axis=1)


def localization_loss(inst: ChainInstance) -> float:
    """Sum of L1 distances between matched predicted and ground-truth centers."""
    pi, gi = pair_index_arrays(inst.matching.pairs)
    if not len(pi):
        return 0.0
    return float(np.abs(inst.pred_array()[pi] - inst.gt_array()[gi]).sum())


def neighboring_loss(inst: ChainInstance) -> float:
    """Sum over consecutive chain gaps of |d_P - d_G|; zero below two pairs."""
    if len(inst.matching.pairs) < 2:
        return 0.0
    _, _, dp, dg = neighbor_gaps(inst)
    return float(np.abs(dp - dg).sum())


def classification_loss(
    scores: Sequence[float], matched_mask: Sequence[bool], params: FocalParams = FocalParams()
) -> float:
    """Focal loss with matched predictions as positives and the rest as negatives."""
    if len(scores) != len(matched_mask):
        raise PreconditionError("scores and matched_mask differ in length")
    if not len(scores):
        return 0.0
    pos, neg = focal_branches(scores, params)
    return float(np.where(np.asarray(matched_mask, dtype=bool), pos, neg).sum())


def composite_loss(
    inst: ChainInstance,
    weights: LossWeights = LossWeights(),
    params: FocalParams = FocalParams(),
) -> LossBreakdown:
    """Weighted sum of the three terms."""
    loc = localization_loss(inst)
    neigh = neighboring_loss(inst)
    cls = classification_loss(
        inst.pred_scores, inst.matching.matched_mask(len(inst.pred_scores)), params
    )
    total = weights.lambda_loc * loc + weights.lambda_neigh * neigh + weights.lambda_cls * cls
    return LossBreakdown(loc=loc, neigh=neigh, cls=cls, total=total)


def _power_derivative(base: np.ndarray, gamma: float) -> np.ndarray:
    """d/d(base) of base**gamma, with the gamma == 0 case pinned to zero."""
    if gamma == 0:
        return np.zeros_like(base)
    with np.errstate(divide="ignore"):
        return gamma * base ** (gamma - 1.0)


def focal_branch_derivatives(p, params: FocalParams) -> Tuple[np.ndarray, np.ndarray]:
    """Derivatives of the positive and negative focal branches with respect to p."""
    p = np.asarray(p, dtype=float)
    a, eps = params.alpha, params.epsilon
    log_p = np.log(p + eps)
    log_q = np.log(1.0 - p + eps)
    d_pos = a * _power_derivative(1.0 - p, params.gamma) * log_p
    d_pos -= a * (1.0 - p) ** params.gamma / (p + eps)
    d_neg = -(1.0 - a) * _power_derivative(p, params.gamma) * log_q
    d_neg += (1.0 - a) * p**params.gamma / (1.0 - p + eps)
    return d_pos, d_neg


def composite_loss_gradient(
    inst: ChainInstance,
    weights: LossWeights = LossWeights(),
    params: FocalParams = FocalParams(),
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Analytic gradient of the composite total.

    Returns:
        (n_pred, 2) array of center gradients and (n_pred,) array of score
        gradients. Exact zeros inside |.| take the subgradient 0.
    """
    pred = inst.pred_array()
    grad_centers = np.zeros_like(pred)
    scores = inst.score_array()

    pi, gi = pair_index_arrays(inst.matching.pairs)
    if len(pi):
        grad_centers[pi] += weights.lambda_loc * np.sign(pred[pi] - inst.gt_array()[gi])

    if len(pi) >= 2:
        order, dp_vec, dp, dg = neighbor_gaps(inst)
        coeff = weights.lambda_neigh * np.sign(dp - dg)
        unit = np.zeros_like(dp_vec)
        nonzero = dp > 0
        unit[nonzero] = dp_vec[nonzero] / dp[nonzero, None]
        # dp_vec[k] = pred[order[k + 1]] - pred[order[k]]
        contribution = coeff[:, None] * unit
        np.add.at(grad_centers, order[1:], contribution)
        np.add.at(grad_centers, order[:-1], -contribution)

    grad_scores = np.zeros_like(scores)
    if len(scores):
        d_pos, d_neg = focal_branch_derivatives(scores, params)
        mask = np.asarray(inst.matching.matched_mask(len(scores)), dtype=bool)
        grad_scores = weights.lambda_cls * np.where(mask, d_pos, d_neg)

    return grad_centers, grad_scores
