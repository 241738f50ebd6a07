"""Chunk-caption-join summaries for segments classified explicit.

A captioner is anything with ``caption(request: dict) -> str``. The request
is the adapter payload::

    {"segment_id": str, "chunk_index": int, "start_s": float,
     "end_s": float, "frames_ref": str | None}

with times on the source clock. :class:`SubprocessCaptioner` sends that
object as one JSON line to an external command's stdin and reads one
caption line back from stdout.
"""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import fusion as F
from .data import SegmentRecord, partition
from .errors import AdapterError, ConfigError, TrifuseError
from .fusion import EXPLICIT, FusionModel, Modality

log = logging.getLogger(__name__)


@dataclass
class ChunkPlan:
    segment_id: str
    offset_s: float
    chunk_len_s: float
    chunks: list[tuple[float, float]]  # relative to the segment start
    frames_ref: str | None = None

    def requests(self) -> list[dict]:
        return [
            {
                "segment_id": self.segment_id,
                "chunk_index": i,
                "start_s": self.offset_s + a,
                "end_s": self.offset_s + b,
                "frames_ref": self.frames_ref,
            }
            for i, (a, b) in enumerate(self.chunks)
        ]


@dataclass
class SegmentSummary:
    segment_id: str
    captions: list[str]

    @property
    def text(self) -> str:
        return " ".join(self.captions)


def plan_chunks(segment: SegmentRecord, chunk_len_s: float = 10.0) -> ChunkPlan:
    """Cut a segment into consecutive chunks of at most ``chunk_len_s``.

    Short remainders stay as their own final chunk, so no chunk ever
    exceeds ``chunk_len_s``.
    """
    if not chunk_len_s > 0:
        raise ConfigError(f"chunk length must be positive, got {chunk_len_s}")
    chunks = partition(segment.duration, chunk_len_s, 0.0)
    return ChunkPlan(segment.segment_id, segment.start_s, chunk_len_s, chunks, segment.refs.get(Modality.VIDEO))


class MockCaptioner:
    """Deterministic stand-in: ``"chunk <index> of <segment_id>."``."""

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def caption(self, request: dict) -> str:
        with self._lock:
            self.calls += 1
        return f"chunk {request['chunk_index']} of {request['segment_id']}."


class SubprocessCaptioner:
    """Run ``command`` once per chunk; JSON request on stdin, caption on stdout."""

    def __init__(self, command, timeout_s: float = 30.0):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise ConfigError("captioner command is empty")
        if not timeout_s > 0:
            raise ConfigError(f"captioner timeout must be positive, got {timeout_s}")
        self.timeout_s = float(timeout_s)
        self.calls = 0
        self._lock = threading.Lock()

    def caption(self, request: dict) -> str:
        with self._lock:
            self.calls += 1
        idx = request.get("chunk_index")
        try:
            proc = subprocess.run(
                self.argv,
                input=(json.dumps(request) + "\n").encode("utf-8"),
                capture_output=True,
                timeout=self.timeout_s,
                check=False,
            )
        except subprocess.TimeoutExpired:
            raise AdapterError(f"captioner timed out after {self.timeout_s:g} s on chunk {idx}", idx) from None
        except OSError as exc:
            raise AdapterError(f"cannot start captioner {self.argv[0]!r}: {exc}", idx) from None
        if proc.returncode != 0:
            err = proc.stderr.decode("utf-8", "replace").strip().splitlines()
            detail = f": {err[-1]}" if err else ""
            raise AdapterError(f"captioner exited with status {proc.returncode} on chunk {idx}{detail}", idx)
        try:
            out = proc.stdout.decode("utf-8")
        except UnicodeDecodeError:
            raise AdapterError(f"captioner wrote non-UTF-8 output on chunk {idx}", idx) from None
        lines = out.splitlines()
        if not lines or not lines[0].strip():
            raise AdapterError(f"captioner produced no caption for chunk {idx}", idx)
        return lines[0].strip()


def summarize_segment(plan: ChunkPlan, captioner) -> SegmentSummary:
    """Caption chunks strictly in order and join them with single spaces.

    The first failure aborts the segment; the raised :class:`AdapterError`
    carries the chunk index and every caption obtained before it.
    """
    captions = []
    for req in plan.requests():
        i = req["chunk_index"]
        try:
            text = captioner.caption(req)
        except AdapterError as exc:
            raise AdapterError(f"segment {plan.segment_id}: {exc}", i, captions) from exc
        except Exception as exc:
            raise AdapterError(f"segment {plan.segment_id}: chunk {i}: {exc}", i, captions) from exc
        captions.append(" ".join(str(text).split()))
    return SegmentSummary(plan.segment_id, captions)


@dataclass
class SegmentResult:
    segment_id: str
    source_id: str
    start_s: float
    end_s: float
    probabilities: tuple[float, float] | None = None
    predicted: int | None = None
    summary: SegmentSummary | None = None
    error: str | None = None
    error_kind: str | None = None
    partial_captions: list[str] = field(default_factory=list)

    @property
    def explicit(self) -> bool:
        return self.predicted == EXPLICIT

    def to_dict(self) -> dict:
        out = {
            "segment_id": self.segment_id,
            "source_id": self.source_id,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "prediction": None if self.predicted is None else ("explicit" if self.explicit else "non-explicit"),
            "p_explicit": None if self.probabilities is None else self.probabilities[1],
            "summary": None if self.summary is None else self.summary.text,
            "captions": None if self.summary is None else list(self.summary.captions),
        }
        if self.error is not None:
            out["error"] = {"kind": self.error_kind, "message": self.error, "partial_captions": list(self.partial_captions)}
        return out


def classify_segment(model: FusionModel, record: SegmentRecord) -> SegmentResult:
    res = SegmentResult(record.segment_id, record.source_id, record.start_s, record.end_s)
    pred, probs = F.predict(model, {m: record.feature(m) for m in model.modalities})
    res.predicted = pred
    res.probabilities = (float(probs[0]), float(probs[1]))
    return res


def pipeline_run(
    records, model: FusionModel, captioner, chunk_len_s: float = 10.0, workers: int = 1, resolver=None
) -> list[SegmentResult]:
    """Classify every segment and summarise the explicit ones.

    With a ``resolver`` (see :class:`trifuse.ingest.Resolver`) missing
    features are loaded from each record's payload refs first. Per-segment
    failures are recorded on that segment's result and never stop the run.
    Results come back in input order.
    """
    if workers < 1:
        raise ConfigError(f"worker count must be positive, got {workers}")
    if not chunk_len_s > 0:
        raise ConfigError(f"chunk length must be positive, got {chunk_len_s}")
    results = []
    for r in records:
        try:
            if resolver is not None:
                resolver.attach(r, model.modalities, model.widths)
            results.append(classify_segment(model, r))
        except TrifuseError as exc:
            res = SegmentResult(r.segment_id, r.source_id, r.start_s, r.end_s, error=str(exc), error_kind=type(exc).__name__)
            results.append(res)
            log.warning("segment %s not classified: %s", r.segment_id, exc)

    todo = [(res, rec) for res, rec in zip(results, records) if res.error is None and res.explicit]

    def work(item):
        res, rec = item
        try:
            res.summary = summarize_segment(plan_chunks(rec, chunk_len_s), captioner)
        except AdapterError as exc:
            res.error, res.error_kind, res.partial_captions = str(exc), "AdapterError", exc.captions
            log.warning("segment %s not summarised: %s", rec.segment_id, exc)

    if workers == 1 or len(todo) <= 1:
        for item in todo:
            work(item)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, todo))
    return results

