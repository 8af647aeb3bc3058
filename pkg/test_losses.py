"""
Test script to verify the chain loss terms, their composite and the analytic gradient
"""

from dataclasses import replace

import numpy as np
import pytest

from chain_counter.assignment import FocalParams, MatchResult
from chain_counter.enums import Axis
from chain_counter.exceptions import PreconditionError
from chain_counter.geometry import BBox, Detection, ImageRecord, Point2D
from chain_counter.gradcheck import random_chain_instance
from chain_counter.losses import (
    ChainInstance,
    LossWeights,
    chain_order,
    classification_loss,
    composite_loss,
    composite_loss_gradient,
    localization_loss,
    neighboring_loss,
)


def make_instance(preds, gts, pairs=None, scores=None, axis=Axis.X):
    if pairs is None:
        pairs = [(k, k) for k in range(min(len(preds), len(gts)))]
    if scores is None:
        scores = [0.9] * len(preds)
    return ChainInstance(
        pred_centers=[Point2D(*p) for p in preds],
        pred_scores=scores,
        gt_centers=[Point2D(*g) for g in gts],
        matching=MatchResult.from_pairs(pairs, len(preds), len(gts), 0.0),
        axis=axis,
    )


def test_localization_loss_examples():
    assert localization_loss(make_instance([(1, 1)], [(1, 1)])) == 0
    assert localization_loss(make_instance([(3, 4)], [(0, 0)])) == 7
    inst = make_instance([(1, 0), (10, 2)], [(0, 0), (10, 0)])
    assert localization_loss(inst) == 3


def test_localization_loss_ignores_unmatched():
    inst = make_instance([(0, 0), (50, 50)], [(0, 0)], pairs=[(0, 0)])
    assert localization_loss(inst) == 0


def test_neighboring_loss_examples():
    assert neighboring_loss(make_instance([(0, 0), (5, 0)], [(0, 0), (3, 0)])) == 2
    inst = make_instance([(0, 0), (4, 0), (10, 0)], [(0, 0), (5, 0), (10, 0)])
    assert neighboring_loss(inst) == pytest.approx(2)


def test_neighboring_loss_translation_invariant():
    gts = [(0, 0), (30, 2), (61, 1), (90, 0)]
    preds = [(x + 7.5, y - 3.0) for x, y in gts]
    assert neighboring_loss(make_instance(preds, gts)) == pytest.approx(0, abs=1e-12)


def test_neighboring_loss_needs_two_pairs():
    assert neighboring_loss(make_instance([(0, 0)], [(9, 9)])) == 0


def test_chain_order_follows_ground_truth_along_axis():
    inst = make_instance(
        [(0, 0), (1, 0), (2, 0)], [(20, 0), (0, 0), (10, 0)], pairs=[(0, 0), (1, 1), (2, 2)]
    )
    assert chain_order(inst) == [(1, 1), (2, 2), (0, 0)]


def test_classification_loss_examples():
    assert classification_loss([1 - 1e-8], [True]) == pytest.approx(0, abs=1e-12)
    assert classification_loss([1e-8], [False]) == pytest.approx(0, abs=1e-12)
    assert classification_loss([0.5], [True]) == pytest.approx(0.0433217, abs=1e-6)
    assert classification_loss([], []) == 0


def test_classification_loss_length_mismatch():
    with pytest.raises(PreconditionError):
        classification_loss([0.5, 0.4], [True])


def test_composite_loss_perfect_predictions():
    gts = [(0, 0), (30, 0), (60, 0)]
    inst = make_instance(gts, gts, scores=[1 - 1e-9] * 3)
    assert composite_loss(inst).total == pytest.approx(0, abs=1e-9)


def test_composite_loss_is_linear_in_weights():
    inst = make_instance([(1, 0), (33, 1), (58, -2)], [(0, 0), (30, 0), (60, 0)], scores=[0.6, 0.8, 0.3])
    a = composite_loss(inst, LossWeights(lambda_loc=1, lambda_neigh=1, lambda_cls=1))
    b = composite_loss(inst, LossWeights(lambda_loc=10, lambda_neigh=100, lambda_cls=1))
    assert (a.loc, a.neigh, a.cls) == (b.loc, b.neigh, b.cls)
    assert b.total - a.total == pytest.approx(9 * a.loc + 99 * a.neigh)


def test_composite_loss_hand_computed_instance():
    # loc: 1 + (3 + 1) + (2 + 2) = 9; pred gaps hypot(32, 1) and hypot(25, 3) vs gt gaps 30
    inst = make_instance([(1, 0), (33, 1), (58, -2)], [(0, 0), (30, 0), (60, 0)], scores=[0.5] * 3)
    breakdown = composite_loss(inst)
    assert breakdown.loc == 9
    dp1, dp2 = np.hypot(32, 1), np.hypot(25, 3)
    assert breakdown.neigh == pytest.approx(abs(dp1 - 30) + abs(dp2 - 30))
    assert breakdown.cls == pytest.approx(3 * 0.0433217, abs=1e-6)
    assert breakdown.total == pytest.approx(10 * 9 + 100 * breakdown.neigh + breakdown.cls)


def test_loss_weights_reject_negative():
    with pytest.raises(PreconditionError):
        LossWeights(lambda_neigh=-1)


def test_gradient_single_offset_pair():
    inst = make_instance([(3, 0)], [(0, 0)])
    grad_c, grad_s = composite_loss_gradient(
        inst, LossWeights(lambda_loc=1, lambda_neigh=0, lambda_cls=0)
    )
    assert grad_c.tolist() == [[1.0, 0.0]]
    assert grad_s.tolist() == [0.0]


def test_gradient_zero_on_perfect_chain():
    gts = [(0, 0), (30, 0), (60, 0), (90, 0)]
    inst = make_instance(gts, gts, scores=[1 - 1e-12] * 4)
    grad_c, grad_s = composite_loss_gradient(inst)
    assert np.all(grad_c == 0)
    assert np.max(np.abs(grad_s)) < 1e-6


def test_gradient_of_neighboring_term_by_hand():
    # gap 5 vs 3: stretching the gap costs, so the right point is pushed left
    inst = make_instance([(0, 0), (5, 0)], [(0, 0), (3, 0)])
    grad_c, _ = composite_loss_gradient(inst, LossWeights(lambda_loc=0, lambda_neigh=1, lambda_cls=0))
    assert grad_c.tolist() == [[-1.0, 0.0], [1.0, 0.0]]


def test_gradient_unmatched_scores_push_down():
    inst = make_instance([(0, 0), (40, 40)], [(0, 0)], pairs=[(0, 0)], scores=[0.5, 0.5])
    _, grad_s = composite_loss_gradient(inst)
    assert grad_s[0] < 0 < grad_s[1]


def test_from_record_matches_and_orients():
    record = ImageRecord(
        "r",
        200,
        100,
        predictions=[Detection(BBox(61, 50, 10, 10), 0.9), Detection(BBox(9, 50, 10, 10), 0.8)],
        ground_truth=[BBox(10, 50, 10, 10), BBox(60, 50, 10, 10), BBox(110, 50, 10, 10)],
    )
    inst = ChainInstance.from_record(record, FocalParams())
    assert inst.axis is Axis.X
    assert inst.matching.pairs == ((0, 1), (1, 0))
    assert inst.matching.unmatched_gts == (2,)


def test_chain_instance_rejects_bad_pairs():
    with pytest.raises(PreconditionError):
        make_instance([(0, 0)], [(0, 0)], pairs=[(0, 3)])


def test_classification_only_weights_give_classification_loss():
    rng = np.random.default_rng(11)
    weights = LossWeights(lambda_loc=0, lambda_neigh=0, lambda_cls=1)
    for _ in range(50):
        inst = random_chain_instance(rng, int(rng.integers(2, 12)))
        mask = inst.matching.matched_mask(len(inst.pred_scores))
        assert composite_loss(inst, weights).total == classification_loss(inst.pred_scores, mask)


def test_localization_loss_is_zero_exactly_when_matched_centers_coincide():
    rng = np.random.default_rng(12)
    for _ in range(50):
        inst = random_chain_instance(rng, int(rng.integers(1, 12)))
        pairs = inst.matching.pairs
        assert localization_loss(inst) > 0
        assert any(inst.pred_centers[i] != inst.gt_centers[j] for i, j in pairs)

        centers = list(inst.pred_centers)
        for i, j in pairs:
            centers[i] = inst.gt_centers[j]
        snapped = replace(inst, pred_centers=centers)
        assert localization_loss(snapped) == 0

        i, _ = pairs[int(rng.integers(len(pairs)))]
        dx, dy = rng.uniform(0.01, 1.0, size=2)
        centers[i] = Point2D(centers[i].x + dx, centers[i].y - dy)
        assert localization_loss(replace(inst, pred_centers=centers)) > 0
