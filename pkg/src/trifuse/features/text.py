"""Signed hashing-trick bag of words for transcripts."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..errors import DataError, UsageError
from .store import FeatureVector

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1
_TOKEN = re.compile(r"[^\W_]+")


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase, then split on anything that is not a letter or digit."""
    return _TOKEN.findall(text.lower())


def text_features(transcript: str, dim: int = 256) -> FeatureVector:
    """Bucket = hash mod dim, sign = -1 when bit 63 of the hash is set; L2-normalised."""
    if dim < 2:
        raise UsageError(f"text feature width must be at least 2, got {dim}")
    v = np.zeros(dim)
    for tok in tokenize(transcript):
        h = fnv1a_64(tok.encode("utf-8"))
        v[h % dim] += -1.0 if h >> 63 else 1.0
    norm = np.sqrt(np.dot(v, v))
    if norm > 0:
        v /= norm
    return FeatureVector("language", v)


def read_transcript(path, start_s: float | None = None, end_s: float | None = None) -> str:
    """Load a transcript, optionally restricted to a time window.

    Timed transcripts have one ``start<TAB>end<TAB>text`` cue per line; cues
    overlapping ``[start_s, end_s)`` are kept. Anything else is treated as
    plain text and returned whole.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"transcript not found: {path}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path}: transcript is not UTF-8") from None
    cues = _parse_cues(raw)
    if cues is None or start_s is None or end_s is None:
        return " ".join(c[2] for c in cues) if cues is not None else raw
    return " ".join(text for a, b, text in cues if a < end_s and b > start_s)


def _parse_cues(raw: str):
    cues = []
    for line in raw.splitlines():
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        if len(parts) != 3:
            return None
        try:
            cues.append((float(parts[0]), float(parts[1]), parts[2]))
        except ValueError:
            return None
    return cues or None
