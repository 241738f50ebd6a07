"""Synthetic stand-ins for the segment corpus.

``synth_dataset`` produces feature-level records (inline vectors) for
training experiments. ``synth_media`` writes tiny WAV / frame-stack /
transcript files plus a source manifest so the full
segment -> extract -> train -> run path can be exercised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import EXPLICIT_CLASSES, NORMAL_CLASS, SegmentRecord, write_manifest
from .errors import UsageError
from .features.audio import AudioBuffer, write_wav
from .features.video import FrameStack, write_frames
from .fusion import Modality

# Explicit share of the 1659-segment corpus: (521 + 130) / 1659.
EXPLICIT_PRIOR = 651 / 1659

GAUSSIAN = "gaussian"
INTERACTION = "interaction"


@dataclass
class SynthSpec:
    n_train: int = 400
    n_test: int = 100
    explicit_prior: float = EXPLICIT_PRIOR
    widths: dict = field(default_factory=lambda: {"video": 12, "audio": 10, "language": 8})
    # Distance between class means, in units of the (unit) noise std.
    separation: dict = field(default_factory=lambda: {"video": 4.0, "audio": 4.0, "language": 4.0})
    mode: str = GAUSSIAN
    # Modalities whose latent signs must agree for a segment to be explicit.
    interaction_pair: tuple = ("video", "audio")

    def __post_init__(self):
        self.widths = {Modality.parse(k): int(v) for k, v in self.widths.items()}
        self.separation = {Modality.parse(k): float(v) for k, v in self.separation.items()}
        if self.n_train < 1 or self.n_test < 1:
            raise UsageError("train and test sizes must be positive")
        if not 0 < self.explicit_prior < 1:
            raise UsageError(f"explicit prior must lie in (0, 1), got {self.explicit_prior}")
        if set(self.widths) != set(Modality) or any(w < 1 for w in self.widths.values()):
            raise UsageError("synthetic data needs a positive width for every modality")
        for m in Modality:
            s = self.separation.setdefault(m, 0.0)
            if s < 0 or not math.isfinite(s):
                raise UsageError(f"separation for {m.value} must be finite and nonnegative")
        if self.mode not in (GAUSSIAN, INTERACTION):
            raise UsageError(f"unknown synthetic mode {self.mode!r}")
        pair = tuple(Modality.parse(m) for m in self.interaction_pair)
        if len(set(pair)) != 2:
            raise UsageError("interaction mode needs two distinct modalities")
        self.interaction_pair = pair


def _labels(rng, n, prior):
    n_pos = int(round(n * prior))
    if n >= 2:
        n_pos = min(max(n_pos, 1), n - 1)
    y = np.zeros(n, dtype=int)
    y[:n_pos] = 1
    rng.shuffle(y)
    return y


def _directions(rng, spec):
    out = {}
    for m in Modality:
        u = rng.normal(size=spec.widths[m])
        out[m] = u / np.linalg.norm(u)
    return out


def _draw(rng, spec, dirs, y, split):
    n = y.size
    signs = {}
    if spec.mode == INTERACTION:
        a, b = spec.interaction_pair
        sa = rng.choice([-1.0, 1.0], size=n)
        signs[a] = sa
        signs[b] = np.where(y == 1, sa, -sa)
    else:
        for m in Modality:
            signs[m] = np.where(y == 1, 1.0, -1.0)
    feats = {}
    for m in Modality:
        noise = rng.normal(size=(n, spec.widths[m]))
        s = signs.get(m)
        shift = 0.0 if s is None else (0.5 * spec.separation[m] * s)[:, None] * dirs[m][None, :]
        feats[m] = noise + shift
    classes = rng.integers(0, len(EXPLICIT_CLASSES), size=n)
    records = []
    for i in range(n):
        raw = EXPLICIT_CLASSES[classes[i]] if y[i] == 1 else NORMAL_CLASS
        records.append(
            SegmentRecord(
                f"synth-{split}-{i:04d}",
                f"synth-{split}-src{i:04d}",
                0.0,
                60.0,
                raw,
                split,
                features={m: feats[m][i] for m in Modality},
            )
        )
    return records


def synth_dataset(spec: SynthSpec | None = None, seed: int = 0):
    """Return ``(train, test)`` record lists with inline features.

    In ``gaussian`` mode each modality has its own random unit direction
    and the class means sit ``separation`` apart along it. In
    ``interaction`` mode two modalities carry a random latent sign and the
    label is whether those signs agree; other modalities are pure noise.
    """
    spec = spec or SynthSpec()
    rng = np.random.Generator(np.random.PCG64(seed))
    dirs = _directions(rng, spec)
    y_train = _labels(rng, spec.n_train, spec.explicit_prior)
    y_test = _labels(rng, spec.n_test, spec.explicit_prior)
    return _draw(rng, spec, dirs, y_train, "train"), _draw(rng, spec, dirs, y_test, "test")


# -- raw media ---------------------------------------------------------------

VIOLENT_WORDS = ("fight", "gun", "shoot", "explosion", "riot", "crash", "attack", "scream", "blood", "fire")
CALM_WORDS = ("walk", "park", "lunch", "music", "garden", "coffee", "friends", "sunny", "market", "reading")


@dataclass
class MediaSpec:
    n_sources: int = 8
    min_duration_s: float = 30.0
    max_duration_s: float = 140.0
    sample_rate: int = 16000
    frame_rate: float = 1.0
    frame_size: int = 16
    test_fraction: float = 0.25


def _source_audio(rng, explicit, n, sr):
    t = np.arange(n) / sr
    if explicit:
        bursts = (rng.random(int(math.ceil(n / sr))) < 0.7).repeat(sr)[:n]
        return np.clip(0.5 * rng.normal(size=n) * (0.3 + bursts), -1, 1)
    f0 = rng.uniform(200, 600)
    return 0.05 * np.sin(2 * np.pi * f0 * t) + 0.002 * rng.normal(size=n)


def _source_frames(rng, explicit, n, size):
    if explicit:
        return rng.random((n, 3, size, size))
    base = np.linspace(0.2, 0.8, size)[None, None, :, None] * np.ones((n, 3, size, size))
    drift = 0.01 * np.arange(n)[:, None, None, None] / max(n, 1)
    return np.clip(base + drift + 0.005 * rng.normal(size=(n, 3, size, size)), 0, 1)


def _source_transcript(rng, explicit, duration):
    words = VIOLENT_WORDS if explicit else CALM_WORDS
    lines, t = [], 0.0
    while t < duration:
        step = float(rng.uniform(2.0, 6.0))
        end = min(t + step, duration)
        text = " ".join(rng.choice(words, size=int(rng.integers(3, 7))))
        lines.append(f"{t:.3f}\t{end:.3f}\t{text}")
        t = end
    return "\n".join(lines) + "\n"


def synth_media(out_dir, spec: MediaSpec | None = None, seed: int = 0) -> Path:
    """Write synthetic source media and a source-level manifest; returns the manifest path.

    Sources alternate explicit / non-explicit; the last ``test_fraction``
    of them are assigned to the test split.
    """
    spec = spec or MediaSpec()
    if spec.n_sources < 2:
        raise UsageError("need at least two synthetic sources")
    out = Path(out_dir)
    rng = np.random.Generator(np.random.PCG64(seed))
    n_test = max(1, int(round(spec.n_sources * spec.test_fraction)))
    records = []
    for i in range(spec.n_sources):
        explicit = i % 2 == 0
        duration = float(np.round(rng.uniform(spec.min_duration_s, spec.max_duration_s), 1))
        sid = f"src{i:03d}"
        raw = EXPLICIT_CLASSES[int(rng.integers(len(EXPLICIT_CLASSES)))] if explicit else NORMAL_CLASS
        audio = AudioBuffer(spec.sample_rate, _source_audio(rng, explicit, int(duration * spec.sample_rate), spec.sample_rate))
        n_frames = int(math.ceil(duration * spec.frame_rate))
        frames = FrameStack(_source_frames(rng, explicit, n_frames, spec.frame_size))
        refs = {
            Modality.AUDIO: str(write_wav(out / "media" / f"{sid}.wav", audio)),
            Modality.VIDEO: str(write_frames(out / "media" / f"{sid}.frames", frames)),
        }
        tpath = out / "media" / f"{sid}.tsv"
        tpath.write_text(_source_transcript(rng, explicit, duration), encoding="utf-8")
        refs[Modality.LANGUAGE] = str(tpath)
        split = "test" if i >= spec.n_sources - n_test else "train"
        records.append(SegmentRecord(sid, sid, 0.0, duration, raw, split, refs))
    return write_manifest(out / "sources.csv", records)
