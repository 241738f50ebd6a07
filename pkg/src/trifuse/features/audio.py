"""Log-mel spectrograms and pooled audio features.

Mel scale is HTK (``2595 * log10(1 + f / 700)``). Triangles are linear in
Hz between adjacent mel-spaced edge frequencies and each row is rescaled
so its largest weight is exactly 1.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from .store import FeatureVector

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class MelConfig:
    n_fft: int = 1024
    hop: int = 512
    n_mels: int = 64
    fmin: float = 0.0
    fmax: float = 8000.0


@dataclass
class AudioBuffer:
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError("audio must be mono (one channel)")
        if int(self.sample_rate) <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def slice(self, start_s: float, end_s: float) -> "AudioBuffer":
        i = int(round(start_s * self.sample_rate))
        j = int(round(end_s * self.sample_rate))
        return AudioBuffer(self.sample_rate, self.samples[max(i, 0) : min(j, self.samples.size)])


@dataclass
class MelSpectrogram:
    values: np.ndarray  # n_mels x n_frames, natural-log power
    config: MelConfig
    sample_rate: int

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Return an ``n_mels x (n_fft // 2 + 1)`` matrix of triangular filters."""
    _check_config(sample_rate, cfg)
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    freqs = np.arange(cfg.n_fft // 2 + 1) * sample_rate / cfg.n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peak = fb.max(axis=1, keepdims=True)
    if np.any(peak <= 0):
        empty = int(np.argmin(peak[:, 0]))
        raise ConfigError(
            f"mel filter {empty} covers no FFT bin; use fewer mels or a larger n_fft"
        )
    return fb / peak


def _check_config(sample_rate, cfg: MelConfig):
    if cfg.n_fft < 2 or cfg.hop < 1 or cfg.n_mels < 1:
        raise ConfigError(f"invalid spectrogram sizes: {cfg}")
    if not 0 <= cfg.fmin < cfg.fmax:
        raise ConfigError(f"need 0 <= fmin < fmax, got fmin={cfg.fmin}, fmax={cfg.fmax}")
    if cfg.fmax > sample_rate / 2:
        raise ConfigError(f"fmax {cfg.fmax} Hz exceeds the Nyquist frequency {sample_rate / 2} Hz")


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def power_frames(samples: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Hann-windowed power spectra, one column per frame, no padding."""
    n_frames = 1 + (samples.size - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    spec = np.fft.rfft(samples[idx] * hann(n_fft), axis=1)
    return (spec.real**2 + spec.imag**2).T


def mel_spectrogram(audio: AudioBuffer, cfg: MelConfig = MelConfig()) -> MelSpectrogram:
    _check_config(audio.sample_rate, cfg)
    if audio.samples.size < cfg.n_fft:
        raise DataError(f"audio has {audio.samples.size} samples, fewer than n_fft={cfg.n_fft}")
    power = power_frames(audio.samples, cfg.n_fft, cfg.hop)
    mel = mel_filterbank(audio.sample_rate, cfg) @ power
    return MelSpectrogram(np.log(mel + LOG_FLOOR), cfg, audio.sample_rate)


def audio_features(mel: MelSpectrogram) -> FeatureVector:
    """Per-bin temporal mean followed by per-bin temporal (population) std."""
    v = mel.values
    if v.ndim != 2 or v.shape[1] < 1:
        raise DataError("spectrogram has no frames")
    mean = v.mean(axis=1)
    std = np.sqrt(((v - mean[:, None]) ** 2).mean(axis=1))
    return FeatureVector("audio", np.concatenate([mean, std]))


def read_wav(path) -> AudioBuffer:
    """Read a 16-bit PCM mono WAV. Stereo and other sample widths are rejected."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate, n = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            raw = w.readframes(n)
    except FileNotFoundError:
        raise DataError(f"audio file not found: {path}") from None
    except (wave.Error, EOFError) as exc:
        raise DataError(f"{path}: not a readable PCM WAV file ({exc})") from None
    if channels != 1:
        raise DataError(f"{path}: expected mono audio, found {channels} channels")
    if width != 2:
        raise DataError(f"{path}: expected 16-bit samples, found {8 * width}-bit")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(rate, samples)


def write_wav(path, audio: AudioBuffer) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())
    return path
