"""
Line-delimited JSON dataset files.

Each non-blank line is one self-contained record:

    {"id": "img-1", "width": 800, "height": 600,
     "predictions": [{"cx": 10, "cy": 20, "w": 8, "h": 8, "score": 0.9}],
     "ground_truth": [{"cx": 11, "cy": 20, "w": 8, "h": 8}]}

A record may carry "gt_count" instead of ground-truth boxes when only the
number of handles is annotated.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Union

from .exceptions import DatasetParseError, PreconditionError
from .geometry import BBox, Detection, ImageRecord

logger = logging.getLogger(__name__)

RECORD_FIELDS = ("id", "width", "height", "predictions", "ground_truth", "gt_count")
BOX_FIELDS = ("cx", "cy", "w", "h")
DETECTION_FIELDS = BOX_FIELDS + ("score",)


def _number(obj: Mapping[str, Any], key: str) -> float:
    if key not in obj:
        raise DatasetParseError(f"missing field {key!r}")
    value = obj[key]
    # bool is an int subclass and is never a valid coordinate.
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DatasetParseError(f"field {key!r} must be a number, got {value!r}")
    return float(value)


def _check_fields(obj: Any, allowed: Iterable[str], where: str, strict: bool) -> None:
    if not isinstance(obj, dict):
        raise DatasetParseError(f"{where} must be an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if not unknown:
        return
    if strict:
        raise DatasetParseError(f"{where} has unknown fields {unknown}")
    logger.warning(f"[WARNING] Ignoring unknown {where} fields {unknown}")


def parse_box(obj: Any, strict: bool = False) -> BBox:
    _check_fields(obj, BOX_FIELDS, "ground-truth box", strict)
    return BBox(*(_number(obj, k) for k in BOX_FIELDS))


def parse_detection(obj: Any, strict: bool = False) -> Detection:
    _check_fields(obj, DETECTION_FIELDS, "prediction", strict)
    box = BBox(*(_number(obj, k) for k in BOX_FIELDS))
    return Detection(box, _number(obj, "score"))


def _list_field(obj: Mapping[str, Any], key: str) -> List[Any]:
    value = obj.get(key, [])
    if not isinstance(value, list):
        raise DatasetParseError(f"field {key!r} must be a list")
    return value


def parse_record(
    obj: Any, line_number: Optional[int] = None, strict: bool = False
) -> ImageRecord:
    """
    Build an ImageRecord from one decoded JSON object.

    Raises:
        DatasetParseError: the object is malformed or violates a record
            invariant; the message carries line_number when given.
    """
    try:
        _check_fields(obj, RECORD_FIELDS, "record", strict)
        if "id" not in obj:
            raise DatasetParseError("missing field 'id'")
        gt_count = obj.get("gt_count")
        if gt_count is not None and (isinstance(gt_count, bool) or not isinstance(gt_count, int)):
            raise DatasetParseError(f"field 'gt_count' must be an integer, got {gt_count!r}")
        return ImageRecord(
            id=str(obj["id"]),
            width=_number(obj, "width"),
            height=_number(obj, "height"),
            predictions=[parse_detection(d, strict) for d in _list_field(obj, "predictions")],
            ground_truth=[parse_box(b, strict) for b in _list_field(obj, "ground_truth")],
            gt_count=gt_count,
        )
    except DatasetParseError as e:
        if line_number is None or e.line_number is not None:
            raise
        raise DatasetParseError(e.message, line_number) from e
    except PreconditionError as e:
        raise DatasetParseError(str(e), line_number) from e


def _box_dict(box: BBox) -> Dict[str, float]:
    return {"cx": float(box.cx), "cy": float(box.cy), "w": float(box.w), "h": float(box.h)}


def record_to_dict(record: ImageRecord) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "id": record.id,
        "width": float(record.width),
        "height": float(record.height),
        "predictions": [
            {**_box_dict(d.box), "score": float(d.score)} for d in record.predictions
        ],
        "ground_truth": [_box_dict(b) for b in record.ground_truth],
    }
    if record.gt_count is not None:
        data["gt_count"] = int(record.gt_count)
    return data


def serialize_record(record: ImageRecord) -> str:
    """One JSON line; floats use the shortest representation that round-trips."""
    return json.dumps(record_to_dict(record), ensure_ascii=False, allow_nan=False)


def read_dataset(path: Union[str, Path], strict: bool = False) -> Iterator[ImageRecord]:
    """
    Stream records from a dataset file in file order. Blank lines are skipped.

    Raises:
        DatasetParseError: a line is not valid JSON or not a valid record.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fin:
        for line_number, line in enumerate(fin, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetParseError(f"invalid JSON: {e.msg}", line_number) from e
            yield parse_record(obj, line_number, strict)


def load_dataset(path: Union[str, Path], strict: bool = False) -> List[ImageRecord]:
    records = list(read_dataset(path, strict))
    logger.info(f"Loaded {len(records)} records from {path}")
    return records


def write_dataset(path: Union[str, Path], records: Iterable[ImageRecord]) -> int:
    """Write records one per line; returns how many were written."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8", newline="\n") as fout:
        for record in records:
            fout.write(serialize_record(record) + "\n")
            n += 1
    logger.info(f"[SUCCESS] Wrote {n} records to {path}")
    return n
