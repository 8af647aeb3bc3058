"""
Test script to verify analytic gradients against central finite differences
"""

import time

import numpy as np
import pytest

from chain_counter.assignment import FocalParams
from chain_counter.gradcheck import (
    GradCheckResult,
    finite_difference_gradient,
    gradient_check,
    random_chain_instance,
)
from chain_counter.losses import LossWeights


def test_finite_difference_on_quadratic():
    grad = finite_difference_gradient(lambda x: float(np.sum(x**2)), np.array([[1.0, -2.0]]))
    assert grad.shape == (1, 2)
    assert np.allclose(grad, [[2.0, -4.0]], atol=1e-8)


def test_random_instance_shape():
    rng = np.random.default_rng(1)
    inst = random_chain_instance(rng, 6)
    assert len(inst.gt_centers) == 6
    assert 6 <= len(inst.pred_centers) <= 8
    assert len(inst.matching.pairs) == 6
    assert all(0.05 <= s <= 0.95 for s in inst.pred_scores)


def test_gradient_check_on_random_instances():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        inst = random_chain_instance(rng, int(rng.integers(3, 21)))
        result = gradient_check(inst)
        assert result.n_checked > 0
        worst = max(worst, result.max_rel_error)
    assert worst < 1e-4
    assert time.perf_counter() - start < 60


@pytest.mark.parametrize(
    "weights",
    [
        LossWeights(lambda_loc=1, lambda_neigh=0, lambda_cls=0),
        LossWeights(lambda_loc=0, lambda_neigh=1, lambda_cls=0),
        LossWeights(lambda_loc=0, lambda_neigh=0, lambda_cls=1),
    ],
)
def test_gradient_check_per_term(weights):
    rng = np.random.default_rng(7)
    for _ in range(10):
        inst = random_chain_instance(rng, 8)
        assert gradient_check(inst, weights).passed(1e-4)


def test_gradient_check_with_other_focal_shapes():
    rng = np.random.default_rng(11)
    for params in (FocalParams(alpha=0.5, gamma=0.0), FocalParams(alpha=0.9, gamma=1.0)):
        inst = random_chain_instance(rng, 5, params=params)
        assert gradient_check(inst, params=params).passed(1e-4)


def test_result_passed_is_strict():
    assert not GradCheckResult(1e-4, 10, 0).passed(1e-4)
    assert GradCheckResult(0.0, 10, 0).passed(1e-4)
