"""
Counter implementations used by the two-pass counting protocol.

A counter sees one crop of an image, presented as an ImageRecord in
crop-local coordinates, and returns detections in those coordinates.
"""

from __future__ import annotations

import json
import logging
import zlib
from abc import ABC, abstractmethod
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Union

from .enums import CounterKind
from .exceptions import DatasetParseError, PreconditionError
from .geometry import Detection, ImageRecord
from .synth import CorruptionSpec, corrupt

logger = logging.getLogger(__name__)


class Counter(ABC):
    """Anything that can count handles inside a crop."""

    @abstractmethod
    def count(self, crop: ImageRecord) -> List[Detection]:
        """Detections for crop, in crop-local coordinates."""


class OracleCounter(Counter):
    """Returns the crop's ground truth with full confidence."""

    def count(self, crop: ImageRecord) -> List[Detection]:
        return [Detection(box, 1.0) for box in crop.ground_truth]


class NoisyCounter(Counter):
    """Ground truth passed through the synthetic corruption model."""

    def __init__(self, spec: CorruptionSpec):
        self.spec = spec

    def count(self, crop: ImageRecord) -> List[Detection]:
        # Each crop gets its own stream so results do not depend on slice order.
        seed = self.spec.seed + zlib.crc32(crop.id.encode("utf-8"))
        return list(corrupt(crop, replace(self.spec, seed=seed)).predictions)


class FileBackedCounter(Counter):
    """
    Precomputed outputs of an external model.

    The file holds one JSON object per line:
    {"crop_id": "<record id>/<slice index or full>", "predictions": [{cx, cy, w, h, score}, ...]}
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.outputs: Dict[str, List[Detection]] = {}
        from .dataset_io import parse_detection

        with self.path.open("r", encoding="utf-8") as fin:
            for line_number, line in enumerate(fin, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    self.outputs[str(obj["crop_id"])] = [
                        parse_detection(d) for d in obj.get("predictions", [])
                    ]
                except (ValueError, KeyError, TypeError) as e:
                    raise DatasetParseError(f"{self.path}: {e}", line_number) from e
        logger.info(f"Loaded counter outputs for {len(self.outputs)} crops from {self.path}")

    def count(self, crop: ImageRecord) -> List[Detection]:
        if crop.id not in self.outputs:
            raise KeyError(f"no precomputed output for crop {crop.id!r}")
        return list(self.outputs[crop.id])


def make_counter(
    kind: CounterKind,
    corruption: CorruptionSpec = CorruptionSpec(),
    path: Union[str, Path, None] = None,
) -> Counter:
    """Build the counter selected on the command line."""
    if kind is CounterKind.ORACLE:
        return OracleCounter()
    if kind is CounterKind.NOISY:
        return NoisyCounter(corruption)
    if path is None:
        raise PreconditionError("the file-backed counter needs a counter file")
    return FileBackedCounter(path)
