"""
Test script to verify gap clustering, image slicing and two-pass counting
"""

import json
import time

import numpy as np
import pytest

from chain_counter.counters import Counter, FileBackedCounter, NoisyCounter, OracleCounter, make_counter
from chain_counter.enums import Axis, CounterKind
from chain_counter.exceptions import CounterError, PreconditionError
from chain_counter.geometry import BBox, Detection, ImageRecord, Point2D
from chain_counter.partition import (
    PartitionConfig,
    cluster_by_gap,
    crop_record,
    first_pass_slices,
    full_region,
    single_pass_count,
    slice_image,
    two_pass,
    two_pass_count,
)
from chain_counter.synth import CorruptionSpec, SceneSpec, generate_scene


class WidthLimitedCounter(Counter):
    """Exact on narrow crops, sees only every other handle on wide ones."""

    def __init__(self, limit):
        self.limit = limit

    def count(self, crop):
        boxes = crop.ground_truth if crop.width <= self.limit else crop.ground_truth[::2]
        return [Detection(b, 1.0) for b in boxes]


class EmptyCounter(Counter):
    def count(self, crop):
        return []


class FailingCounter(Counter):
    def __init__(self, fail_on):
        self.fail_on = fail_on

    def count(self, crop):
        if crop.id.endswith(self.fail_on):
            raise RuntimeError("model crashed")
        return [Detection(b, 1.0) for b in crop.ground_truth]


class OutOfCropCounter(Counter):
    def count(self, crop):
        return [Detection(BBox(crop.width + 5, 1, 2, 2), 0.9)]


def pts(*xs):
    return [Point2D(x, 0) for x in xs]


def test_cluster_by_gap_examples():
    assert cluster_by_gap(pts(0, 10, 100, 110), 50) == [range(0, 2), range(2, 4)]
    assert cluster_by_gap(pts(0, 10, 20), 50) == [range(0, 3)]
    assert cluster_by_gap(pts(5), 50) == [range(0, 1)]
    assert cluster_by_gap([], 50) == []


def test_cluster_by_gap_is_euclidean_and_strict():
    points = [Point2D(0, 0), Point2D(30, 40), Point2D(60, 80)]
    assert cluster_by_gap(points, 50) == [range(0, 3)]
    assert cluster_by_gap(points, 49.9) == [range(0, 1), range(1, 2), range(2, 3)]


def test_cluster_by_gap_rejects_bad_threshold():
    with pytest.raises(PreconditionError):
        cluster_by_gap(pts(0, 1), 0)


def record_with(preds, width=400, height=200):
    return ImageRecord("r", width, height, predictions=[Detection(b, 0.9) for b in preds])


def test_slice_image_padding_and_clipping():
    record = record_with([BBox(105, 50, 10, 10), BBox(195, 50, 10, 10), BBox(3, 50, 10, 10)])
    (s,) = slice_image(record, [[0, 1]], padding=10)
    r = s.crop_region
    assert (r.x1, r.y1, r.x2, r.y2) == (90, 35, 210, 65)
    assert s.member_indices == (0, 1)

    (tight,) = slice_image(record, [[1]], padding=0)
    assert (tight.crop_region.x1, tight.crop_region.x2) == (190, 200)

    (edge,) = slice_image(record, [[2]], padding=20)
    assert edge.crop_region.x1 == 0


def test_slice_image_empty_cluster_is_full_image():
    record = record_with([BBox(50, 50, 10, 10)])
    (s,) = slice_image(record, [[]])
    assert s.crop_region == full_region(record)


def test_slice_image_padding_monotone():
    record = record_with([BBox(105, 50, 10, 10), BBox(150, 60, 10, 10)])
    small = slice_image(record, [[0, 1]], padding=5)[0].crop_region
    large = slice_image(record, [[0, 1]], padding=25)[0].crop_region
    assert large.covers(small)


def test_slice_image_rejects_unknown_member():
    with pytest.raises(PreconditionError):
        slice_image(record_with([BBox(50, 50, 10, 10)]), [[3]])


def test_crop_record_translates_to_local_coordinates():
    record = ImageRecord("r", 400, 200, ground_truth=[BBox(100, 50, 10, 10), BBox(300, 50, 10, 10)])
    region = slice_image(record_with([BBox(100, 50, 10, 10)]), [[0]], padding=20)[0].crop_region
    crop = crop_record(record, region, "r/0")
    assert crop.id == "r/0"
    assert (crop.width, crop.height) == (50, 50)
    assert crop.ground_truth == (BBox(25, 25, 10, 10),)


def scene(seed, axis=Axis.X, n_clusters=2, spacing=30.0, cross_jitter=0.0):
    width, height = (1600, 400) if axis is Axis.X else (400, 1600)
    return generate_scene(
        SceneSpec(
            width=width,
            height=height,
            n_clusters=n_clusters,
            handles_per_cluster=(8, 12),
            spacing=spacing,
            inter_cluster_gap=200,
            axis=axis,
            cross_jitter=cross_jitter,
            seed=seed,
            id=f"scene-{seed}",
        )
    )


def test_two_pass_oracle_is_exact():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    for k in range(100):
        record = scene(
            k,
            axis=Axis.X if k % 2 == 0 else Axis.Y,
            n_clusters=int(rng.integers(1, 4)),
            spacing=float(rng.uniform(15, 30)),
            cross_jitter=float(rng.uniform(0, 5)),
        )
        cfg = PartitionConfig(gap_threshold=100.0)
        result = two_pass_count(record, OracleCounter(), cfg)
        assert len(result) == record.n_gt
    assert time.perf_counter() - start < 30


def test_two_pass_beats_width_limited_single_pass():
    counter = WidthLimitedCounter(limit=450)
    cfg = PartitionConfig(gap_threshold=100.0, padding=30.0)
    for k in range(20):
        record = scene(k)
        single = len(single_pass_count(record, counter))
        double = len(two_pass_count(record, counter, cfg))
        assert single < record.n_gt
        assert abs(double - record.n_gt) <= abs(single - record.n_gt)
        assert double == record.n_gt


def test_single_dense_cluster_gives_one_slice():
    record = scene(3, n_clusters=1)
    first = single_pass_count(record, OracleCounter())
    slices = first_pass_slices(record, first, PartitionConfig(gap_threshold=100.0))
    assert len(slices) == 1
    assert slices[0].member_indices == tuple(range(record.n_gt))


def test_empty_first_pass_uses_full_image():
    record = scene(1)
    assert first_pass_slices(record, [], PartitionConfig(gap_threshold=100.0))[0].crop_region == full_region(record)
    assert two_pass_count(record, EmptyCounter(), PartitionConfig(gap_threshold=100.0)) == []


def test_two_pass_output_is_sorted_and_global():
    record = scene(5)
    result = two_pass_count(record, OracleCounter(), PartitionConfig(gap_threshold=100.0, padding=15))
    xs = [d.center().x for d in result]
    assert xs == sorted(xs)
    got = sorted((d.box.cx, d.box.cy) for d in result)
    want = sorted((b.cx, b.cy) for b in record.ground_truth)
    assert np.allclose(got, want)


def test_boundary_duplicates_are_merged():
    # padding wide enough that the crops overlap and share edge handles
    record = scene(2, spacing=30.0)
    cfg = PartitionConfig(gap_threshold=100.0, padding=245.0)
    result = two_pass_count(record, OracleCounter(), cfg)
    assert len(result) == record.n_gt


def test_counter_failures_carry_slice_index():
    record = scene(4)
    cfg = PartitionConfig(gap_threshold=100.0)
    with pytest.raises(CounterError) as first:
        two_pass_count(record, FailingCounter("/full"), cfg)
    assert first.value.slice_index == -1
    with pytest.raises(CounterError) as second:
        two_pass_count(record, FailingCounter("/1"), cfg)
    assert second.value.slice_index == 1
    assert "model crashed" in str(second.value)
    with pytest.raises(CounterError):
        single_pass_count(record, OutOfCropCounter())


def test_noisy_counter_is_deterministic_per_crop():
    counter = NoisyCounter(CorruptionSpec(center_jitter_sigma=1.0, dropout_rate=0.2, seed=3))
    record = scene(6)
    assert single_pass_count(record, counter) == single_pass_count(record, counter)


def test_file_backed_counter(tmp_path):
    record = ImageRecord("img", 200, 100, ground_truth=[BBox(20, 50, 10, 10), BBox(150, 50, 10, 10)])
    lines = [
        {"crop_id": "img/full", "predictions": [{"cx": 20, "cy": 50, "w": 10, "h": 10, "score": 0.9}]},
    ]
    path = tmp_path / "outputs.jsonl"
    path.write_text("\n".join(json.dumps(x) for x in lines) + "\n", encoding="utf-8")
    counter = make_counter(CounterKind.FILE, path=path)
    assert isinstance(counter, FileBackedCounter)
    assert len(single_pass_count(record, counter)) == 1
    with pytest.raises(CounterError):
        two_pass_count(record, counter, PartitionConfig(gap_threshold=100.0))


def test_make_counter_kinds():
    assert isinstance(make_counter(CounterKind.ORACLE), OracleCounter)
    assert isinstance(make_counter(CounterKind.NOISY), NoisyCounter)
    with pytest.raises(PreconditionError):
        make_counter(CounterKind.FILE)


def test_partition_config_validation():
    with pytest.raises(PreconditionError):
        PartitionConfig(gap_threshold=0)
    with pytest.raises(PreconditionError):
        PartitionConfig(gap_threshold=10, padding=-1)


def test_merge_uses_full_distance_not_one_axis():
    # every crop is the whole image, so all three handles are seen by all three crops
    boxes = [BBox(100, 100, 10, 10), BBox(100, 900, 10, 10), BBox(950, 500, 10, 10)]
    record = ImageRecord("wide", 1000, 1000, ground_truth=boxes)
    result = two_pass_count(record, OracleCounter(), PartitionConfig(gap_threshold=50, padding=2000))
    assert len(result) == 3
    assert sorted((d.box.cx, d.box.cy) for d in result) == sorted((b.cx, b.cy) for b in boxes)


def test_close_detections_from_one_crop_are_kept():
    boxes = [BBox(100, 50, 10, 10), BBox(100.5, 50, 10, 10), BBox(300, 50, 10, 10)]
    record = ImageRecord("pair", 400, 100, ground_truth=boxes)
    cfg = PartitionConfig(gap_threshold=50, padding=250, merge_distance=1.0)
    res = two_pass(record, OracleCounter(), cfg)
    assert len(res.slices) == 2
    assert len(res.detections) == 3


def test_two_pass_result_carries_first_pass_and_slices():
    record = scene(7)
    res = two_pass(record, OracleCounter(), PartitionConfig(gap_threshold=100.0))
    assert len(res.first) == record.n_gt
    assert len(res.slices) == 2
    assert res.detections == two_pass_count(record, OracleCounter(), PartitionConfig(gap_threshold=100.0))


@pytest.mark.parametrize("seed", range(5))
def test_count_does_not_depend_on_threshold_between_spacing_and_gap(seed):
    # handles 30 px apart inside a cluster, 200 px between clusters
    record = scene(seed, n_clusters=3)
    counts = {}
    for delta in (40.0, 80.0, 120.0, 160.0, 190.0):
        result = two_pass_count(record, OracleCounter(), PartitionConfig(gap_threshold=delta, padding=15))
        counts[delta] = [(d.box.cx, d.box.cy) for d in result]
    first = counts[40.0]
    assert len(first) == record.n_gt
    assert all(c == first for c in counts.values())
