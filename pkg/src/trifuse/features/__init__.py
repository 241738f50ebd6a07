"""Deterministic per-modality feature extractors and feature-file I/O."""

from .audio import AudioBuffer, MelConfig, MelSpectrogram, audio_features, mel_filterbank, mel_spectrogram, read_wav, write_wav
from .store import FeatureVector, load_feature_file, read_feature_lines, write_feature_file
from .text import fnv1a_64, text_features, tokenize
from .video import FrameStack, read_frames, video_features, write_frames

__all__ = [
    "AudioBuffer",
    "MelConfig",
    "MelSpectrogram",
    "audio_features",
    "mel_filterbank",
    "mel_spectrogram",
    "read_wav",
    "write_wav",
    "FeatureVector",
    "load_feature_file",
    "read_feature_lines",
    "write_feature_file",
    "fnv1a_64",
    "text_features",
    "tokenize",
    "FrameStack",
    "read_frames",
    "video_features",
    "write_frames",
]
