"""Frame-stack container and motion/colour statistics.

On-disk layout: the 8-byte magic ``TRIFRAME``, four little-endian uint32
extents (frames, channels, height, width), then float32 little-endian
values in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from .store import FeatureVector

MAGIC = b"TRIFRAME"
HIST_BINS = 16
VIDEO_DIM = 3 + 3 + HIST_BINS + 2


@dataclass
class FrameStack:
    frames: np.ndarray  # (num_frames, 3, height, width), values in [0, 1]

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 4:
            raise DataError(f"frame stack must be 4-D (frames, channels, height, width), got shape {f.shape}")
        if f.shape[1] != 3:
            raise DataError(f"frame stack must have 3 channels, got {f.shape[1]}")
        if not np.all(np.isfinite(f)):
            raise DataError("frame stack holds non-finite values")
        self.frames = f

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    def slice(self, start: int, stop: int) -> "FrameStack":
        return FrameStack(self.frames[max(start, 0) : stop])


def video_features(stack: FrameStack) -> FeatureVector:
    """24 values: channel means (3), channel stds (3), a 16-bin histogram of
    per-transition mean absolute frame difference, and that quantity's mean
    and std."""
    f = stack.frames
    if f.shape[0] < 2:
        raise DataError(f"need at least 2 frames for motion features, got {f.shape[0]}")
    per_channel = f.transpose(1, 0, 2, 3).reshape(3, -1)
    ch_mean = per_channel.mean(axis=1)
    ch_std = np.sqrt(((per_channel - ch_mean[:, None]) ** 2).mean(axis=1))

    diffs = np.abs(np.diff(f, axis=0)).reshape(f.shape[0] - 1, -1).mean(axis=1)
    # Values of exactly 1.0 land in the last bin.
    bins = np.minimum((np.clip(diffs, 0.0, 1.0) * HIST_BINS).astype(int), HIST_BINS - 1)
    hist = np.bincount(bins, minlength=HIST_BINS) / diffs.size
    d_mean = diffs.mean()
    d_std = np.sqrt(((diffs - d_mean) ** 2).mean())
    return FeatureVector("video", np.concatenate([ch_mean, ch_std, hist, [d_mean, d_std]]))


def write_frames(path, stack: FrameStack) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = MAGIC + struct.pack("<4I", *stack.frames.shape)
    path.write_bytes(header + stack.frames.astype("<f4").tobytes())
    return path


def read_frames(path) -> FrameStack:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise DataError(f"frame file not found: {path}") from None
    if len(raw) < 24 or raw[:8] != MAGIC:
        raise DataError(f"{path}: missing TRIFRAME header")
    shape = struct.unpack("<4I", raw[8:24])
    expected = 4 * int(np.prod(shape))
    if len(raw) - 24 != expected:
        raise DataError(f"{path}: header declares {shape} ({expected} bytes) but body has {len(raw) - 24}")
    data = np.frombuffer(raw, dtype="<f4", offset=24).reshape(shape)
    return FrameStack(data)
