"""Segment records, class mapping, time partitioning and the CSV manifest."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .fusion import EXPLICIT, NON_EXPLICIT, Modality

EXPLICIT_CLASSES = ("Car Accident", "Explosion", "Fighting", "Riot", "Shooting", "Abuse")
NORMAL_CLASS = "Normal Activities"
RAW_CLASSES = EXPLICIT_CLASSES + (NORMAL_CLASS,)

LABEL_NAMES = {NON_EXPLICIT: "non-explicit", EXPLICIT: "explicit"}

MANIFEST_HEADER = (
    "segment_id",
    "source_id",
    "start_s",
    "end_s",
    "raw_class",
    "split",
    "video_ref",
    "audio_ref",
    "text_ref",
)
REF_COLUMNS = {Modality.VIDEO: "video_ref", Modality.AUDIO: "audio_ref", Modality.LANGUAGE: "text_ref"}
UNLABELED = ("", "-")

# Interval ends closer than this are treated as equal.
_EPS = 1e-9


def map_class(raw_class: str) -> int:
    """Binary label for a raw class name: everything but normal activity is explicit."""
    name = str(raw_class).strip()
    for c in RAW_CLASSES:
        if name.lower() == c.lower():
            return NON_EXPLICIT if c == NORMAL_CLASS else EXPLICIT
    raise DataError(f"unknown class {raw_class!r}; valid classes: {', '.join(RAW_CLASSES)}")


def partition(duration_s: float, max_len_s: float, min_tail_s: float = 0.0) -> list[tuple[float, float]]:
    """Cut ``[0, duration_s)`` into consecutive pieces of ``max_len_s``.

    A final remainder shorter than ``min_tail_s`` is merged into the piece
    before it (so that piece may run up to ``max_len_s + min_tail_s``).
    """
    if not duration_s > 0 or not math.isfinite(duration_s):
        raise UsageError(f"duration must be positive, got {duration_s}")
    if not max_len_s > 0:
        raise UsageError(f"segment length must be positive, got {max_len_s}")
    if not 0 <= min_tail_s <= max_len_s:
        raise UsageError(f"minimum tail must lie in [0, {max_len_s:g}], got {min_tail_s}")
    n_full = int(math.floor(duration_s / max_len_s + _EPS))
    bounds = [k * max_len_s for k in range(n_full + 1)]
    if duration_s - bounds[-1] > _EPS:
        bounds.append(duration_s)
    else:
        bounds[-1] = duration_s
    if len(bounds) > 2 and bounds[-1] - bounds[-2] < min_tail_s:
        del bounds[-2]
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def segment_video(duration_s: float, max_len_s: float = 60.0, min_tail_s: float = 5.0) -> list[tuple[float, float]]:
    return partition(duration_s, max_len_s, min_tail_s)


def check_cover(intervals, duration_s: float, tol: float = 1e-9) -> bool:
    """True when ``intervals`` tile ``[0, duration_s)`` in order without gaps or overlaps."""
    if not intervals:
        return False
    pos = 0.0
    for a, b in intervals:
        if abs(a - pos) > tol or not b > a:
            return False
        pos = b
    return abs(pos - duration_s) <= tol


@dataclass
class SegmentRecord:
    segment_id: str
    source_id: str
    start_s: float
    end_s: float
    raw_class: str | None = None
    split: str = ""
    refs: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)

    def __post_init__(self):
        self.start_s = float(self.start_s)
        self.end_s = float(self.end_s)
        if not (0 <= self.start_s < self.end_s):
            raise DataError(f"segment {self.segment_id}: need 0 <= start < end, got [{self.start_s}, {self.end_s})")
        if self.raw_class in UNLABELED:
            self.raw_class = None
        if self.raw_class is not None:
            map_class(self.raw_class)

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s

    @property
    def label(self) -> int | None:
        return None if self.raw_class is None else map_class(self.raw_class)

    def feature(self, modality: Modality) -> np.ndarray:
        if modality not in self.features:
            raise DataError(f"segment {self.segment_id}: no {modality.value} features")
        return self.features[modality]


def _parse_float(value, name, line):
    try:
        x = float(value)
    except ValueError:
        raise DataError(f"manifest line {line}: {name} {value!r} is not a number") from None
    if not math.isfinite(x):
        raise DataError(f"manifest line {line}: {name} must be finite")
    return x


def read_manifest(path, max_len_s: float | None = None) -> list[SegmentRecord]:
    """Parse a manifest. Relative refs resolve against the manifest's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}") from None
    if not text.strip():
        raise DataError(f"manifest {path} is empty")
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != MANIFEST_HEADER:
        raise DataError(f"manifest {path}: header must be {','.join(MANIFEST_HEADER)}")
    records, seen = [], set()
    for line, row in enumerate(reader, 2):
        if None in row or any(v is None for v in row.values()):
            raise DataError(f"manifest line {line}: wrong number of fields")
        sid = row["segment_id"].strip()
        if not sid:
            raise DataError(f"manifest line {line}: empty segment_id")
        if sid in seen:
            raise DataError(f"manifest line {line}: duplicate segment_id {sid!r}")
        seen.add(sid)
        start = _parse_float(row["start_s"], "start_s", line)
        end = _parse_float(row["end_s"], "end_s", line)
        if max_len_s is not None and end - start > max_len_s + _EPS:
            raise DataError(f"manifest line {line}: segment {sid} lasts {end - start:g} s, over the {max_len_s:g} s limit")
        refs = {}
        for m, col in REF_COLUMNS.items():
            ref = row[col].strip()
            if ref and ref != "-":
                p = Path(ref)
                refs[m] = str(p if p.is_absolute() else (path.parent / p))
        try:
            records.append(
                SegmentRecord(sid, row["source_id"].strip(), start, end, row["raw_class"].strip(), row["split"].strip(), refs)
            )
        except DataError as exc:
            raise DataError(f"manifest line {line}: {exc}") from None
    if not records:
        raise DataError(f"manifest {path} has no rows")
    return records


def _fmt_time(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


def write_manifest(path, records, relative_to: Path | None = None) -> Path:
    """Write records as CSV; refs under the manifest's directory are stored relative."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = (relative_to or path.parent).resolve()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    for r in records:
        refs = []
        for m in REF_COLUMNS:
            ref = r.refs.get(m)
            if ref is None:
                refs.append("-")
                continue
            p = Path(ref).resolve()
            try:
                refs.append(p.relative_to(base).as_posix())
            except ValueError:
                refs.append(str(p))
        w.writerow([r.segment_id, r.source_id, _fmt_time(r.start_s), _fmt_time(r.end_s), r.raw_class or "-", r.split, *refs])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def segment_records(sources, max_len_s: float = 60.0, min_tail_s: float = 5.0, durations=None) -> list[SegmentRecord]:
    """Expand source rows into segment rows.

    A source row spans ``[start_s, end_s)`` of its media; ``durations`` (source
    id -> seconds) overrides that span. Segment ids are ``<source>_s<NNN>``;
    class, split and payload refs are inherited.
    """
    durations = durations or {}
    out = []
    for src in sources:
        total = float(durations.get(src.source_id, src.end_s - src.start_s))
        offset = src.start_s
        for k, (a, b) in enumerate(segment_video(total, max_len_s, min_tail_s)):
            out.append(
                SegmentRecord(
                    f"{src.source_id}_s{k:03d}",
                    src.source_id,
                    offset + a,
                    offset + b,
                    src.raw_class,
                    src.split,
                    dict(src.refs),
                )
            )
    return out


def split_records(records, split: str) -> list[SegmentRecord]:
    return [r for r in records if r.split == split]
