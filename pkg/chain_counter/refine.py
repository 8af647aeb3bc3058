"""
Gradient-descent refinement of predicted centers and scores under the
composite chain loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from .assignment import FocalParams, MatchResult, hungarian, value_matrix_from_arrays
from .exceptions import PreconditionError, RefineDivergenceError
from .losses import (
    ChainInstance,
    LossBreakdown,
    LossWeights,
    composite_loss,
    composite_loss_gradient,
)

logger = logging.getLogger(__name__)

# Scores are pulled this far inside (0, 1) before moving to logit space.
SCORE_CLIP = 1e-12


@dataclass(frozen=True)
class RefineConfig:
    """Optimizer settings for a refinement run."""

    steps: int = 500
    learning_rate: float = 0.05
    rematch_every: int = 25
    weights: LossWeights = field(default_factory=LossWeights)
    focal: FocalParams = field(default_factory=FocalParams)
    seed: int = 0
    decay_steps: float = 0.0

    def __post_init__(self):
        if self.steps < 1:
            raise PreconditionError(f"steps must be positive, got {self.steps}")
        if self.learning_rate <= 0:
            raise PreconditionError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 1 <= self.rematch_every <= self.steps:
            raise PreconditionError(
                f"rematch_every must lie in [1, steps={self.steps}], got {self.rematch_every}"
            )
        if self.decay_steps < 0:
            raise PreconditionError(f"decay_steps must be >= 0, got {self.decay_steps}")

    def step_size(self, step: int) -> float:
        """Learning rate used for the update that produces step + 1."""
        if self.decay_steps == 0:
            return self.learning_rate
        return self.learning_rate / (1.0 + step / self.decay_steps)


@dataclass
class RefineTrace:
    """Per-step history of a refinement run; entry 0 is the starting state."""

    losses: List[LossBreakdown]
    center_errors: List[float]
    churn: List[int]
    initial: ChainInstance
    final: ChainInstance

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def min_total(self) -> float:
        return min(b.total for b in self.losses)

    def to_dataframe(self) -> pd.DataFrame:
        frame = pd.DataFrame([b.to_dict() for b in self.losses])
        frame.insert(0, "step", range(len(self.losses)))
        frame["center_error"] = self.center_errors
        frame["churn"] = self.churn
        return frame[["step", "loc", "neigh", "cls", "total", "center_error", "churn"]]

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_dataframe().to_csv(path, index=False, float_format="%.10g")


def mean_center_error(inst: ChainInstance) -> float:
    """Mean Euclidean distance between matched predicted and ground-truth centers."""
    if not inst.matching.pairs:
        return 0.0
    idx = np.asarray(inst.matching.pairs, dtype=int)
    diff = inst.pred_array()[idx[:, 0]] - inst.gt_array()[idx[:, 1]]
    return float(np.linalg.norm(diff, axis=1).mean())


def _rematch(
    centers: np.ndarray, scores: np.ndarray, inst: ChainInstance, focal: FocalParams
) -> MatchResult:
    return hungarian(value_matrix_from_arrays(centers, scores, inst.gt_array(), focal))


def refine(inst: ChainInstance, cfg: RefineConfig = RefineConfig()) -> RefineTrace:
    """
    Descend the composite loss from inst.

    Plain descent with a fixed step: each update moves centers by
    learning_rate * gradient / N_G and score logits by the chain-ruled score
    gradient scaled the same way. decay_steps > 0 opts into a diminishing
    step instead. The matching is frozen between re-matches every
    cfg.rematch_every steps.

    Raises:
        PreconditionError: inst has no ground truth.
        RefineDivergenceError: a non-finite loss or state appears.
    """
    if not inst.gt_centers:
        raise PreconditionError("refine needs at least one ground-truth point")

    n_gt = len(inst.gt_centers)
    centers = inst.pred_array().copy()
    logits = logit(np.clip(inst.score_array(), SCORE_CLIP, 1.0 - SCORE_CLIP))
    current = inst

    first = composite_loss(current, cfg.weights, cfg.focal)
    if not math.isfinite(first.total):
        raise RefineDivergenceError(0)
    losses = [first]
    center_errors = [mean_center_error(current)]
    churn = [0]
    logger.info(
        f"Refining {len(centers)} predictions against {n_gt} ground truths "
        f"for {cfg.steps} steps (initial total {first.total:.6g})"
    )

    for step in range(1, cfg.steps + 1):
        grad_centers, grad_scores = composite_loss_gradient(current, cfg.weights, cfg.focal)
        scale = cfg.step_size(step - 1) / n_gt
        scores = expit(logits)
        centers = centers - scale * grad_centers
        logits = logits - scale * grad_scores * scores * (1.0 - scores)
        if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(logits))):
            raise RefineDivergenceError(step, "non-finite state")
        scores = expit(logits)

        matching = current.matching
        changed = 0
        if step % cfg.rematch_every == 0:
            matching = _rematch(centers, scores, current, cfg.focal)
            changed = len(set(matching.pairs) ^ set(current.matching.pairs)) // 2
            if changed:
                logger.debug(f"Step {step}: re-match changed {changed} pairs")

        current = current.with_predictions(centers, scores, matching)
        breakdown = composite_loss(current, cfg.weights, cfg.focal)
        if not math.isfinite(breakdown.total):
            raise RefineDivergenceError(step)
        losses.append(breakdown)
        center_errors.append(mean_center_error(current))
        churn.append(changed)

    trace = RefineTrace(losses, center_errors, churn, initial=inst, final=current)
    if losses[-1].total > losses[0].total:
        logger.warning(
            f"[WARNING] Final total {losses[-1].total:.6g} exceeds initial {losses[0].total:.6g}; "
            f"best along the trace was {trace.min_total:.6g}"
        )
    else:
        logger.info(f"[SUCCESS] Refinement finished at total {losses[-1].total:.6g}")
    return trace


def neighbor_ablation(
    inst: ChainInstance, cfg: RefineConfig = RefineConfig()
) -> Tuple[RefineTrace, RefineTrace]:
    """Run refine with the configured weights and again with lambda_neigh = 0."""
    without = replace(cfg, weights=replace(cfg.weights, lambda_neigh=0.0))
    return refine(inst, cfg), refine(inst, without)
