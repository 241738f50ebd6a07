"""Resolve manifest payload refs into per-modality feature vectors.

A ref is dispatched on its suffix:

=================  ==========================================
``.json/.jsonl``   precomputed feature file (any modality)
``.wav``           16-bit mono PCM, audio modality
``.frames``        TRIFRAME frame stack, video modality
``.txt/.tsv``      transcript (plain or timed cues), language
=================  ==========================================

Source-level media is cut to the segment's ``[start_s, end_s)`` window:
audio by sample index, frames by ``frame_rate``, timed transcripts by cue
overlap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError
from .features.audio import MelConfig, audio_features, mel_spectrogram, read_wav
from .features.store import FeatureVector, read_feature_lines, write_feature_file
from .features.text import read_transcript, text_features
from .features.video import VIDEO_DIM, read_frames, video_features
from .fusion import Modality

FEATURE_SUFFIXES = (".json", ".jsonl")
MEDIA_SUFFIXES = {
    Modality.AUDIO: (".wav",),
    Modality.VIDEO: (".frames",),
    Modality.LANGUAGE: (".txt", ".tsv"),
}


@dataclass(frozen=True)
class FeatureConfig:
    n_fft: int = 1024
    hop: int = 512
    n_mels: int = 64
    fmin: float = 0.0
    fmax: float = 8000.0
    text_dim: int = 256
    frame_rate: float = 1.0

    @property
    def mel(self) -> MelConfig:
        return MelConfig(self.n_fft, self.hop, self.n_mels, self.fmin, self.fmax)

    def width(self, modality: Modality) -> int:
        return {Modality.VIDEO: VIDEO_DIM, Modality.AUDIO: 2 * self.n_mels, Modality.LANGUAGE: self.text_dim}[modality]


@dataclass
class Resolver:
    """Extracts or loads features, caching decoded source files between segments."""

    config: FeatureConfig = field(default_factory=FeatureConfig)
    _cache: dict = field(default_factory=dict)

    def _cached(self, key, loader):
        if key not in self._cache:
            self._cache[key] = loader()
        return self._cache[key]

    def feature(self, record, modality: Modality) -> FeatureVector:
        ref = record.refs.get(modality)
        if ref is None:
            raise DataError(f"segment {record.segment_id}: no {modality.value} payload")
        suffix = Path(ref).suffix.lower()
        if suffix in FEATURE_SUFFIXES:
            return self._from_feature_file(ref, record, modality)
        if suffix not in MEDIA_SUFFIXES[modality]:
            raise DataError(f"segment {record.segment_id}: {ref!r} is not a {modality.value} payload")
        if modality is Modality.AUDIO:
            audio = self._cached(("wav", ref), lambda: read_wav(ref)).slice(record.start_s, record.end_s)
            if audio.samples.size < self.config.n_fft:
                raise DataError(f"segment {record.segment_id}: audio window shorter than one FFT frame")
            fv = audio_features(mel_spectrogram(audio, self.config.mel))
        elif modality is Modality.VIDEO:
            stack = self._cached(("frames", ref), lambda: read_frames(ref))
            rate = self.config.frame_rate
            first = int(math.floor(record.start_s * rate + 1e-9))
            stop = int(math.ceil(record.end_s * rate - 1e-9))
            fv = video_features(stack.slice(first, stop))
        else:
            text = read_transcript(ref, record.start_s, record.end_s)
            fv = text_features(text, self.config.text_dim)
        fv.segment_id = record.segment_id
        return fv

    def _from_feature_file(self, ref, record, modality):
        rows = self._cached(("features", ref), lambda: read_feature_lines(ref))
        hits = [r for r in rows if r.modality == modality.value and r.segment_id == record.segment_id]
        if not hits and len(rows) == 1 and rows[0].modality == modality.value:
            hits = rows
        if len(hits) != 1:
            raise DataError(f"{ref}: expected one {modality.value} record for segment {record.segment_id}, found {len(hits)}")
        return hits[0]

    def attach(self, record, modalities, widths=None):
        """Fill ``record.features`` for ``modalities``; checks widths when given."""
        for m in modalities:
            if m in record.features:
                continue
            fv = self.feature(record, m)
            if widths and m in widths and fv.dim != widths[m]:
                raise DataError(f"segment {record.segment_id}: {m.value} has {fv.dim} features, expected {widths[m]}")
            record.features[m] = fv.values
        return record


@dataclass
class ExtractOutcome:
    written: list[Path] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"written": len(self.written), "failures": self.failures}


def extract_all(records, out_dir, config: FeatureConfig | None = None, modalities=tuple(Modality)):
    """Write one feature file per (segment, modality) and point the records at them.

    Returns the updated records and an :class:`ExtractOutcome`. A failing
    payload is recorded and its ref left untouched; other work continues.
    """
    out_dir = Path(out_dir)
    resolver = Resolver(config or FeatureConfig())
    outcome = ExtractOutcome()
    updated = []
    for r in records:
        refs = dict(r.refs)
        for m in modalities:
            if m not in r.refs:
                continue
            try:
                fv = resolver.feature(r, m)
            except DataError as exc:
                outcome.failures.append({"segment_id": r.segment_id, "modality": m.value, "error": str(exc)})
                continue
            path = write_feature_file(out_dir / f"{r.segment_id}.{m.value}.json", fv, r.segment_id)
            outcome.written.append(path)
            refs[m] = str(path)
        updated.append(type(r)(r.segment_id, r.source_id, r.start_s, r.end_s, r.raw_class, r.split, refs))
    return updated, outcome


def write_jsonl(path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path
