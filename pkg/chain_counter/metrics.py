"""
Counting and localization metrics: MAE/RMSE, GAME, matched L2 statistics,
precision/recall/F1 and IoU.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist

from .assignment import hungarian
from .exceptions import PreconditionError
from .geometry import BBox, ImageRecord, points_to_array

logger = logging.getLogger(__name__)

DEFAULT_GAME_LEVELS = (1, 2, 3)


@dataclass(frozen=True)
class CountStats:
    mae: float
    rmse: float
    n_images: int


@dataclass(frozen=True)
class GameStats:
    """Dataset mean of GAME per grid level."""

    levels: Dict[int, float]
    n_images: int


@dataclass(frozen=True)
class LocalizationReport:
    """
    Matched-localization statistics.

    L2 statistics average per-image values over the images that had at
    least one match. Micro precision/recall/F1 come from TP/FP/FN pooled
    over the dataset, macro ones average per-image values where defined.
    A value is None when its denominator is empty.
    """

    mean_l2: Optional[float]
    mean_median_l2: Optional[float]
    mean_p95_l2: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    mean_iou_matched: Optional[float]
    macro_precision: Optional[float] = None
    macro_recall: Optional[float] = None
    macro_f1: Optional[float] = None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_images: int = 0
    n_images_matched: int = 0


@dataclass(frozen=True)
class MetricsReport:
    """Everything the evaluate command reports for one dataset."""

    count: CountStats
    game: Optional[GameStats] = None
    localization: Optional[LocalizationReport] = None
    n_images: int = 0
    n_annotated: int = 0


@dataclass
class _ImageLocalization:
    distances: List[float] = field(default_factory=list)
    ious: List[float] = field(default_factory=list)
    tp: int = 0
    fp: int = 0
    fn: int = 0


def percentile(values: Sequence[float], q: float) -> float:
    """
    q-th percentile with linear interpolation between closest ranks: for
    sorted v of length n, position h = (n - 1) * q / 100 and the result is
    v[floor(h)] + (h - floor(h)) * (v[floor(h) + 1] - v[floor(h)]).
    """
    if len(values) == 0:
        raise PreconditionError("percentile of an empty list")
    if not 0.0 <= q <= 100.0:
        raise PreconditionError(f"q must lie in [0, 100], got {q}")
    return float(np.percentile(np.asarray(values, dtype=float), q))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes."""
    iw = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    ih = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = iw * ih
    if inter <= 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def count_stats(records: Sequence[ImageRecord]) -> CountStats:
    """MAE and RMSE of per-image prediction counts against ground-truth counts."""
    if not records:
        raise PreconditionError("count_stats needs at least one record")
    errors = np.array([r.n_pred - r.n_gt for r in records], dtype=float)
    return CountStats(
        mae=float(np.mean(np.abs(errors))),
        rmse=float(math.sqrt(np.mean(errors**2))),
        n_images=len(records),
    )


def _cell_counts(xy: np.ndarray, width: float, height: float, level: int) -> np.ndarray:
    """Per-cell counts on a 2^L x 2^L grid; cells are half-open, closed at the far edge."""
    n = 2**level
    counts = np.zeros((n, n), dtype=int)
    if len(xy):
        col = np.clip(np.floor(xy[:, 0] * n / width).astype(int), 0, n - 1)
        row = np.clip(np.floor(xy[:, 1] * n / height).astype(int), 0, n - 1)
        np.add.at(counts, (row, col), 1)
    return counts


def game(record: ImageRecord, level: int) -> float:
    """Sum over the 4^L grid cells of |#pred centers - #gt centers|."""
    if level < 0:
        raise PreconditionError(f"GAME level must be >= 0, got {level}")
    pred = _cell_counts(points_to_array(record.pred_centers()), record.width, record.height, level)
    gt = _cell_counts(points_to_array(record.gt_centers()), record.width, record.height, level)
    return float(np.abs(pred - gt).sum())


def game_stats(records: Sequence[ImageRecord], levels: Sequence[int] = DEFAULT_GAME_LEVELS) -> GameStats:
    """Mean GAME per level over records with instance annotations."""
    annotated = [r for r in records if r.has_instances]
    if not annotated:
        raise PreconditionError("GAME needs at least one record with instance annotations")
    return GameStats(
        levels={int(L): float(np.mean([game(r, L) for r in annotated])) for L in levels},
        n_images=len(annotated),
    )


def _localize_image(record: ImageRecord) -> _ImageLocalization:
    """Filter predictions to those inside a gt box, then match them to gt centers by L2."""
    out = _ImageLocalization()
    inside = [
        d for d in record.predictions if any(b.contains(d.center()) for b in record.ground_truth)
    ]
    if inside:
        pred_xy = points_to_array([d.center() for d in inside])
        gt_xy = points_to_array(record.gt_centers())
        costs = cdist(pred_xy, gt_xy, metric="euclidean")
        match = hungarian(costs)
        out.distances = [float(costs[i, j]) for i, j in match.pairs]
        out.ious = [iou(inside[i].box, record.ground_truth[j]) for i, j in match.pairs]
    out.tp = len(out.distances)
    out.fp = record.n_pred - out.tp
    out.fn = record.n_gt - out.tp
    return out


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den > 0 else None


def _f1(p: Optional[float], r: Optional[float]) -> Optional[float]:
    if p is None or r is None:
        return None
    return 2 * p * r / (p + r) if (p + r) > 0 else 0.0


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def _aggregate_localization(per_image: Sequence[_ImageLocalization]) -> LocalizationReport:
    matched = [x for x in per_image if x.distances]
    tp = sum(x.tp for x in per_image)
    fp = sum(x.fp for x in per_image)
    fn = sum(x.fn for x in per_image)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)

    macro_p = [p for p in (_ratio(x.tp, x.tp + x.fp) for x in per_image) if p is not None]
    macro_r = [r for r in (_ratio(x.tp, x.tp + x.fn) for x in per_image) if r is not None]
    macro_f = [
        f
        for f in (_f1(_ratio(x.tp, x.tp + x.fp), _ratio(x.tp, x.tp + x.fn)) for x in per_image)
        if f is not None
    ]
    all_ious = [v for x in per_image for v in x.ious]

    return LocalizationReport(
        mean_l2=_mean([float(np.mean(x.distances)) for x in matched]),
        mean_median_l2=_mean([percentile(x.distances, 50) for x in matched]),
        mean_p95_l2=_mean([percentile(x.distances, 95) for x in matched]),
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        mean_iou_matched=_mean(all_ious),
        macro_precision=_mean(macro_p),
        macro_recall=_mean(macro_r),
        macro_f1=_mean(macro_f),
        tp=tp,
        fp=fp,
        fn=fn,
        n_images=len(per_image),
        n_images_matched=len(matched),
    )


def localization_report(records: Sequence[ImageRecord], n_jobs: int = 1) -> LocalizationReport:
    """Localization statistics over records with instance annotations."""
    annotated = [r for r in records if r.has_instances]
    if not annotated:
        raise PreconditionError("localization needs at least one record with instance annotations")
    per_image = Parallel(n_jobs=n_jobs)(delayed(_localize_image)(r) for r in annotated)
    return _aggregate_localization(per_image)


def evaluate_dataset(
    records: Sequence[ImageRecord], levels: Sequence[int] = DEFAULT_GAME_LEVELS, n_jobs: int = 1
) -> MetricsReport:
    """
    Counting statistics over every record; GAME and localization over the
    records with instance annotations, or None when there are none.
    """
    count = count_stats(records)
    annotated = [r for r in records if r.has_instances]
    if not annotated:
        logger.warning("[WARNING] No instance annotations; GAME and localization are absent")
        return MetricsReport(count=count, n_images=len(records), n_annotated=0)
    report = MetricsReport(
        count=count,
        game=game_stats(annotated, levels),
        localization=localization_report(annotated, n_jobs=n_jobs),
        n_images=len(records),
        n_annotated=len(annotated),
    )
    logger.info(
        f"[SUCCESS] Evaluated {len(records)} images: MAE {count.mae:.4f}, RMSE {count.rmse:.4f}"
    )
    return report


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def format_report(report: MetricsReport) -> str:
    """Plain-text report with every real number at four decimals."""
    lines = [
        "chain-counter evaluation report",
        f"images: {report.n_images}",
        f"annotated images: {report.n_annotated}",
        "",
        "[counting]",
        f"MAE: {_fmt(report.count.mae)}",
        f"RMSE: {_fmt(report.count.rmse)}",
        "",
        "[game]",
    ]
    if report.game is None:
        lines.append("absent: no instance annotations")
    else:
        lines += [f"GAME-L{L}: {_fmt(v)}" for L, v in sorted(report.game.levels.items())]
    lines += ["", "[localization]"]
    loc = report.localization
    if loc is None:
        lines.append("absent: no instance annotations")
    else:
        lines += [
            f"images with matches: {loc.n_images_matched}",
            f"mean L2: {_fmt(loc.mean_l2)}",
            f"mean median L2: {_fmt(loc.mean_median_l2)}",
            f"mean p95 L2: {_fmt(loc.mean_p95_l2)}",
            f"TP: {loc.tp}",
            f"FP: {loc.fp}",
            f"FN: {loc.fn}",
            f"precision: {_fmt(loc.precision)}",
            f"recall: {_fmt(loc.recall)}",
            f"F1: {_fmt(loc.f1)}",
            f"macro precision: {_fmt(loc.macro_precision)}",
            f"macro recall: {_fmt(loc.macro_recall)}",
            f"macro F1: {_fmt(loc.macro_f1)}",
            f"mean IoU (matched): {_fmt(loc.mean_iou_matched)}",
        ]
    return "\n".join(lines) + "\n"


def report_to_dict(report: MetricsReport) -> Dict[str, Any]:
    """Machine-readable form of a report; GAME levels are keyed 'L<level>'."""
    data = asdict(report)
    if report.game is not None:
        data["game"]["levels"] = {f"L{L}": v for L, v in sorted(report.game.levels.items())}
    return data
