"""Feature vectors and their JSON / JSON-lines file format.

Each record is ``{"segment_id", "modality", "dim", "values"}``. A file
holds either one JSON object or one record per line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError

MODALITY_NAMES = ("video", "audio", "language")


@dataclass
class FeatureVector:
    modality: str
    values: np.ndarray
    source: str = "builtin"
    segment_id: str | None = None

    def __post_init__(self):
        self.modality = getattr(self.modality, "value", self.modality)
        if self.modality not in MODALITY_NAMES:
            raise DataError(f"unknown modality {self.modality!r}")
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"{self.modality} feature vector holds non-finite values")

    @property
    def dim(self) -> int:
        return self.values.size

    def to_record(self, segment_id: str | None = None) -> dict:
        return {
            "segment_id": segment_id if segment_id is not None else (self.segment_id or ""),
            "modality": self.modality,
            "dim": self.dim,
            "values": self.values.tolist(),
        }


def write_feature_file(path, fv: FeatureVector, segment_id: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(fv.to_record(segment_id)) + "\n")
    return path


def _record_to_vector(rec, path, where) -> FeatureVector:
    if not isinstance(rec, dict):
        raise DataError(f"{path}{where}: feature record must be a JSON object")
    missing = {"segment_id", "modality", "dim", "values"} - rec.keys()
    if missing:
        raise DataError(f"{path}{where}: feature record lacks {sorted(missing)}")
    values = rec["values"]
    if not isinstance(values, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in values):
        raise DataError(f"{path}{where}: 'values' must be a list of numbers")
    if any(not math.isfinite(x) for x in values):
        raise DataError(f"{path}{where}: feature values must be finite")
    if rec["dim"] != len(values):
        raise DataError(f"{path}{where}: declared dim {rec['dim']} but {len(values)} values present")
    return FeatureVector(rec["modality"], np.array(values, dtype=np.float64), "external-file", str(rec["segment_id"]))


def read_feature_lines(path) -> list[FeatureVector]:
    """Every record in a feature file (single object or JSON lines)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"feature file not found: {path}") from None
    try:
        return [_record_to_vector(json.loads(text), path, "")]
    except json.JSONDecodeError:
        pass
    out = []
    for i, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{i}: invalid JSON ({exc.msg})") from None
        out.append(_record_to_vector(rec, path, f":{i}"))
    if not out:
        raise DataError(f"{path}: no feature records")
    return out


def load_feature_file(path, modality, dim: int, segment_id: str | None = None) -> FeatureVector:
    """Load one feature vector, checking modality and width.

    With several records in the file, ``segment_id`` picks the record.
    Nothing is returned unless every check passes.
    """
    modality = getattr(modality, "value", modality)
    candidates = [r for r in read_feature_lines(path) if r.modality == modality]
    if segment_id is not None and (len(candidates) > 1 or any(r.segment_id != segment_id for r in candidates)):
        candidates = [r for r in candidates if r.segment_id == segment_id]
    if not candidates:
        who = f" for segment {segment_id!r}" if segment_id is not None else ""
        raise DataError(f"{path}: no {modality} features{who}")
    if len(candidates) > 1:
        raise DataError(f"{path}: {len(candidates)} {modality} records; pass a segment id to choose one")
    fv = candidates[0]
    if fv.dim != dim:
        raise DataError(f"{path}: expected {modality} dim {dim}, found {fv.dim}")
    return fv
