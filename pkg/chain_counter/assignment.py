"""
One-to-one matching between predictions and ground truth.

Costs follow the focal value function: L1 center distance plus the
focal classification cost of the prediction's score.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .exceptions import PreconditionError, SizeLimitError
from .geometry import BBox, Detection, points_to_array

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_PAIRS = 8
BRUTE_FORCE_MAX_INJECTIONS = 5_000_000


@dataclass(frozen=True)
class FocalParams:
    """Focal-loss shape parameters."""

    alpha: float = 0.25
    gamma: float = 2.0
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise PreconditionError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise PreconditionError(f"gamma must be >= 0, got {self.gamma}")
        if self.epsilon <= 0:
            raise PreconditionError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class CostMatrix:
    """N_P x N_G matrix of finite matching costs."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            # an empty list has no column count; treat it as 0 x 0
            if values.size == 0:
                values = values.reshape(0, 0)
            else:
                raise PreconditionError(f"cost matrix must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise PreconditionError("cost matrix entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MatchResult:
    """Assignment of prediction indices to ground-truth indices."""

    pairs: Tuple[Tuple[int, int], ...]
    unmatched_preds: Tuple[int, ...]
    unmatched_gts: Tuple[int, ...]
    total_cost: float

    @classmethod
    def from_pairs(
        cls, pairs: Sequence[Tuple[int, int]], n_pred: int, n_gt: int, total_cost: float
    ) -> MatchResult:
        pairs = tuple(sorted((int(i), int(j)) for i, j in pairs))
        used_p = {i for i, _ in pairs}
        used_g = {j for _, j in pairs}
        if len(used_p) != len(pairs) or len(used_g) != len(pairs):
            raise PreconditionError("an index appears in more than one pair")
        return cls(
            pairs=pairs,
            unmatched_preds=tuple(i for i in range(n_pred) if i not in used_p),
            unmatched_gts=tuple(j for j in range(n_gt) if j not in used_g),
            total_cost=float(total_cost),
        )

    @classmethod
    def empty(cls, n_pred: int = 0, n_gt: int = 0) -> MatchResult:
        return cls((), tuple(range(n_pred)), tuple(range(n_gt)), 0.0)

    def matched_mask(self, n_pred: int) -> List[bool]:
        mask = [False] * n_pred
        for i, _ in self.pairs:
            mask[i] = True
        return mask

    def pred_to_gt(self) -> Dict[int, int]:
        return dict(self.pairs)


def _as_matrix(costs: Union[CostMatrix, np.ndarray, Sequence[Sequence[float]]]) -> CostMatrix:
    return costs if isinstance(costs, CostMatrix) else CostMatrix(np.asarray(costs, dtype=float))


def focal_branches(p, params: FocalParams) -> Tuple[np.ndarray, np.ndarray]:
    """Positive and negative focal-loss branches, evaluated elementwise."""
    p = np.asarray(p, dtype=float)
    pos = -params.alpha * (1.0 - p) ** params.gamma * np.log(p + params.epsilon)
    neg = -(1.0 - params.alpha) * p**params.gamma * np.log(1.0 - p + params.epsilon)
    return pos, neg


def focal_match_cost(p: float, params: FocalParams = FocalParams()) -> float:
    """Classification matching cost L_pos(p) - L_neg(p); decreasing in p."""
    if not 0.0 <= p <= 1.0:
        raise PreconditionError(f"probability must lie in [0, 1], got {p}")
    pos, neg = focal_branches(p, params)
    return float(pos - neg)


def value_matrix_from_arrays(
    pred_xy: np.ndarray, scores: np.ndarray, gt_xy: np.ndarray, params: FocalParams = FocalParams()
) -> CostMatrix:
    """Value matrix from raw (n, 2) center arrays and a score vector."""
    if len(pred_xy) == 0 or len(gt_xy) == 0:
        return CostMatrix(np.zeros((len(pred_xy), len(gt_xy))))
    distance = cdist(pred_xy, gt_xy, metric="cityblock")
    pos, neg = focal_branches(scores, params)
    return CostMatrix(distance + (pos - neg)[:, None])


def build_value_matrix(
    preds: Sequence[Detection], gts: Sequence[BBox], params: FocalParams = FocalParams()
) -> CostMatrix:
    """Entry (i, j) = L1 distance between centers + focal cost of pred i's score."""
    return value_matrix_from_arrays(
        points_to_array([d.center() for d in preds]),
        np.asarray([d.score for d in preds], dtype=float),
        points_to_array([b.center() for b in gts]),
        params,
    )


def _selected_cost(values: np.ndarray, pairs: Sequence[Tuple[int, int]]) -> float:
    return math.fsum(values[i, j] for i, j in pairs)


def hungarian(costs: Union[CostMatrix, np.ndarray, Sequence[Sequence[float]]]) -> MatchResult:
    """Minimum-cost assignment covering min(N_P, N_G) pairs."""
    matrix = _as_matrix(costs)
    if matrix.rows == 0 or matrix.cols == 0:
        return MatchResult.empty(matrix.rows, matrix.cols)
    rows, cols = linear_sum_assignment(matrix.values)
    pairs = list(zip(rows.tolist(), cols.tolist()))
    return MatchResult.from_pairs(
        pairs, matrix.rows, matrix.cols, _selected_cost(matrix.values, pairs)
    )


def brute_force_assignment(
    costs: Union[CostMatrix, np.ndarray, Sequence[Sequence[float]]]
) -> MatchResult:
    """Exhaustive search over every injection of the smaller side into the larger."""
    matrix = _as_matrix(costs)
    n_pred, n_gt = matrix.rows, matrix.cols
    if n_pred == 0 or n_gt == 0:
        return MatchResult.empty(n_pred, n_gt)

    transposed = n_pred > n_gt
    values = matrix.values.T if transposed else matrix.values
    n, m = values.shape
    if n > BRUTE_FORCE_MAX_PAIRS:
        raise SizeLimitError(
            f"brute force limited to {BRUTE_FORCE_MAX_PAIRS} pairs, got {n}"
        )
    n_injections = math.perm(m, n)
    if n_injections > BRUTE_FORCE_MAX_INJECTIONS:
        raise SizeLimitError(
            f"brute force limited to {BRUTE_FORCE_MAX_INJECTIONS} injections, got {n_injections}"
        )

    perms = np.array(list(itertools.permutations(range(m), n)), dtype=int)
    totals = values[np.arange(n), perms].sum(axis=1)
    # Near-ties are re-scored exactly so rounding in the vector sum cannot pick the loser.
    candidates = np.flatnonzero(totals <= totals.min() + 1e-9)
    best_cost, best_perm = None, None
    for k in candidates:
        cost = math.fsum(values[r, c] for r, c in enumerate(perms[k]))
        if best_cost is None or cost < best_cost:
            best_cost, best_perm = cost, perms[k]

    pairs = [(r, int(c)) for r, c in enumerate(best_perm)]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    return MatchResult.from_pairs(pairs, n_pred, n_gt, best_cost)
