"""Run configuration: defaults, JSON config files and flag overrides.

Every leaf has a default. Precedence is defaults < ``--config`` file <
command-line flags. Top-level leaves are exposed as ``--seed``,
``--out-dir`` and so on; section leaves as ``--train.epochs``,
``--features.n-mels``, etc.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .synthetic import EXPLICIT_PRIOR


@dataclass
class ModelSection:
    d: int = 16
    h: int = 64


@dataclass
class TrainSection:
    epochs: int = 100
    lr: float = 1e-3
    momentum: float = 0.9
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    standardize: bool = True


@dataclass
class FeatureSection:
    n_fft: int = 1024
    hop: int = 512
    n_mels: int = 64
    fmin: float = 0.0
    fmax: float = 8000.0
    text_dim: int = 256
    frame_rate: float = 1.0


@dataclass
class SegmentSection:
    max_len_s: float = 60.0
    min_tail_s: float = 5.0


@dataclass
class SummarizeSection:
    chunk_len_s: float = 10.0
    captioner_cmd: str = ""  # empty: built-in mock captioner
    timeout_s: float = 30.0
    workers: int = 1


@dataclass
class SynthSection:
    media: bool = False
    n_train: int = 400
    n_test: int = 100
    explicit_prior: float = EXPLICIT_PRIOR
    mode: str = "gaussian"
    width_video: int = 12
    width_audio: int = 10
    width_language: int = 8
    sep_video: float = 4.0
    sep_audio: float = 4.0
    sep_language: float = 4.0
    n_sources: int = 8


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "trifuse-out"
    strategy: str = "concatenation"
    modalities: str = "video,audio,language"
    manifest: str = ""
    checkpoint: str = ""
    durations: str = ""
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    features: FeatureSection = field(default_factory=FeatureSection)
    segment: SegmentSection = field(default_factory=SegmentSection)
    summarize: SummarizeSection = field(default_factory=SummarizeSection)
    synth: SynthSection = field(default_factory=SynthSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def leaves(cfg=None, prefix=""):
    """Yield ``(dotted_name, default_value, type)`` for every leaf field."""
    cfg = cfg if cfg is not None else RunConfig()
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            yield from leaves(value, f"{prefix}{f.name}.")
        else:
            yield f"{prefix}{f.name}", value, type(value)


def coerce(name: str, raw, kind):
    """Convert a flag string or JSON value to the leaf's type."""
    try:
        if kind is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is list:
            if isinstance(raw, list):
                return [int(x) for x in raw]
            return [int(x) for x in str(raw).split(",") if x.strip()]
        if kind is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        if kind is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {raw!r} for {name} (expected {kind.__name__})") from None


def set_leaf(cfg: RunConfig, dotted: str, value) -> None:
    *path, last = dotted.split(".")
    target = cfg
    for p in path:
        target = getattr(target, p)
    kind = type(getattr(target, last))
    setattr(target, last, coerce(dotted, value, kind))


def _apply_mapping(cfg, doc: dict, prefix=""):
    known = {f.name: f for f in dataclasses.fields(cfg)}
    for key, value in doc.items():
        name = key.replace("-", "_")
        if name not in known:
            raise ConfigError(f"unknown config key {prefix}{key!r}")
        current = getattr(cfg, name)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {prefix}{key!r} must be an object")
            _apply_mapping(current, value, f"{prefix}{name}.")
        else:
            setattr(cfg, name, coerce(f"{prefix}{name}", value, type(current)))


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
        _apply_mapping(cfg, doc)
    for dotted, value in (overrides or {}).items():
        set_leaf(cfg, dotted, value)
    return cfg


def flag_name(dotted: str) -> str:
    return "--" + dotted.replace("_", "-")
