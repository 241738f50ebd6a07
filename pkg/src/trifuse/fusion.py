"""Tri-modal fusion classifiers.

Three strategies share the same skeleton::

    per-modality features --project--> tokens (T x d) --fuse--> fused row
        --fc + relu--> hidden (h) --classifier--> logits (2)

* ``concatenation`` flattens the token matrix.
* ``unified`` runs one self-attention unit over the token sequence, then
  flattens.
* ``combinatorial`` runs a separate attention unit over every unordered
  modality pair, mean-pools each 2-token output and concatenates the pair
  vectors.

Modalities are always processed in the canonical order video < audio <
language, regardless of how the caller's mapping is ordered.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import tensor as T
from .errors import DataError, DimensionError, UsageError
from .tensor import Tensor

CHECKPOINT_FORMAT = "trifuse-checkpoint"
CHECKPOINT_VERSION = 1

EXPLICIT = 1
NON_EXPLICIT = 0


class Modality(str, enum.Enum):
    VIDEO = "video"
    AUDIO = "audio"
    LANGUAGE = "language"

    @property
    def rank(self) -> int:
        return _MODALITY_RANK[self]

    @classmethod
    def parse(cls, value) -> "Modality":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise UsageError(f"unknown modality {value!r} (expected one of: {valid})") from None


_MODALITY_RANK = {m: i for i, m in enumerate(Modality)}


def canonical(modalities: Iterable) -> tuple[Modality, ...]:
    """Deduplicate and sort modalities into canonical order."""
    ms = {Modality.parse(m) for m in modalities}
    return tuple(sorted(ms, key=lambda m: m.rank))


def parse_modalities(text: str) -> tuple[Modality, ...]:
    """Parse ``"video,audio"`` style lists. Empty sets are rejected."""
    parts = [p for p in str(text).replace("+", ",").split(",") if p.strip()]
    ms = canonical(parts)
    if not ms:
        raise UsageError("at least one modality is required")
    return ms


def all_subsets() -> list[tuple[Modality, ...]]:
    """The seven nonempty modality subsets: unimodal, bimodal, then trimodal."""
    out = []
    for k in (1, 2, 3):
        out.extend(itertools.combinations(tuple(Modality), k))
    return out


class Strategy(str, enum.Enum):
    CONCATENATION = "concatenation"
    UNIFIED = "unified"
    COMBINATORIAL = "combinatorial"

    @property
    def label(self) -> str:
        return _STRATEGY_LABELS[self]

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise UsageError(f"unknown strategy {value!r} (expected one of: {valid})") from None


_STRATEGY_LABELS = {
    Strategy.CONCATENATION: "Concatenation",
    Strategy.UNIFIED: "Unified Attention",
    Strategy.COMBINATORIAL: "Combinatorial Attention",
}


@dataclass
class AttentionUnit:
    wq: Tensor
    wk: Tensor
    wv: Tensor

    def __post_init__(self):
        shapes = {self.wq.shape, self.wk.shape, self.wv.shape}
        if len(shapes) != 1:
            raise DimensionError(f"attention projections differ in shape: {sorted(shapes)}")
        (shape,) = shapes
        if shape[0] != shape[1]:
            raise DimensionError(f"attention projections must be square, got {shape}")

    @property
    def d(self) -> int:
        return self.wq.shape[0]


@dataclass
class FusionModel:
    strategy: Strategy
    modalities: tuple[Modality, ...]
    widths: dict[Modality, int]
    d: int
    h: int
    params: dict[str, Tensor]
    input_stats: dict[Modality, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def pairs(self) -> list[tuple[Modality, Modality]]:
        return list(itertools.combinations(self.modalities, 2))

    @property
    def f_in(self) -> int:
        return fused_width(self.strategy, len(self.modalities), self.d)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def attention_units(self) -> dict[str, AttentionUnit]:
        if self.strategy is Strategy.UNIFIED:
            keys = ["unified"]
        elif self.strategy is Strategy.COMBINATORIAL:
            keys = [pair_key(a, b) for a, b in self.pairs]
        else:
            keys = []
        p = self.params
        return {k: AttentionUnit(p[f"attn.{k}.q"], p[f"attn.{k}.k"], p[f"attn.{k}.v"]) for k in keys}


def pair_key(a: Modality, b: Modality) -> str:
    return f"{a.value}+{b.value}"


def fused_width(strategy: Strategy, n_modalities: int, d: int) -> int:
    if strategy is Strategy.COMBINATORIAL:
        return math.comb(n_modalities, 2) * d
    return n_modalities * d


def param_shapes(strategy, modalities, widths, d, h) -> dict[str, tuple[int, int]]:
    """Declared parameter order and shapes. Checkpoints follow this order."""
    strategy = Strategy.parse(strategy)
    modalities = canonical(modalities)
    shapes = {}
    for m in modalities:
        shapes[f"proj.{m.value}.W"] = (int(widths[m]), d)
        shapes[f"proj.{m.value}.b"] = (1, d)
    if strategy is Strategy.UNIFIED:
        units = ["unified"]
    elif strategy is Strategy.COMBINATORIAL:
        units = [pair_key(a, b) for a, b in itertools.combinations(modalities, 2)]
    else:
        units = []
    for u in units:
        for part in ("q", "k", "v"):
            shapes[f"attn.{u}.{part}"] = (d, d)
    shapes["fc.W"] = (fused_width(strategy, len(modalities), d), h)
    shapes["fc.b"] = (1, h)
    shapes["cls.W"] = (h, 2)
    shapes["cls.b"] = (1, 2)
    return shapes


def init_model(strategy, modalities, widths: Mapping, d: int = 16, h: int = 64, seed: int = 0) -> FusionModel:
    """Glorot-uniform weights from a PCG64 stream seeded by ``seed``; zero biases.

    Weights are drawn in declared parameter order, so (strategy, modalities,
    widths, d, h, seed) determine the model bit for bit.
    """
    strategy = Strategy.parse(strategy)
    modalities = canonical(modalities)
    if not modalities:
        raise UsageError("a fusion model needs at least one modality")
    if strategy is Strategy.COMBINATORIAL and len(modalities) < 2:
        raise UsageError("combinatorial attention needs at least two modalities")
    if d <= 0 or h <= 0:
        raise UsageError(f"model widths must be positive (d={d}, h={h})")
    w = {}
    for m in modalities:
        key = m if m in widths else m.value
        if key not in widths:
            raise UsageError(f"no input width configured for modality {m.value!r}")
        w[m] = int(widths[key])
        if w[m] <= 0:
            raise UsageError(f"input width for {m.value!r} must be positive")

    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for name, (rows, cols) in param_shapes(strategy, modalities, w, d, h).items():
        if name.endswith(".b"):
            data = np.zeros((rows, cols))
        else:
            bound = math.sqrt(6.0 / (rows + cols))
            data = rng.uniform(-bound, bound, size=(rows, cols))
        params[name] = Tensor(data, requires_grad=True)
    return FusionModel(strategy, modalities, w, int(d), int(h), params)


# -- forward pieces ------------------------------------------------------------


def _as_row(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64).reshape(1, -1))


def project(model: FusionModel, features: Mapping) -> Tensor:
    """Map each active modality's vector to a d-wide token; rows in canonical order."""
    lookup = {Modality.parse(k): v for k, v in features.items()}
    rows = []
    for m in model.modalities:
        if m not in lookup:
            raise DataError(f"missing features for modality {m.value!r}")
        x = _as_row(lookup[m])
        if x.shape != (1, model.widths[m]):
            raise DataError(f"modality {m.value!r}: expected {model.widths[m]} features, got shape {x.shape}")
        W = model.params[f"proj.{m.value}.W"]
        b = model.params[f"proj.{m.value}.b"]
        rows.append(T.relu(T.affine(x, W, b)))
    return rows[0] if len(rows) == 1 else T.concat_rows(rows)


def attend(unit: AttentionUnit, tokens: Tensor, return_weights: bool = False):
    """Scaled dot-product self-attention over the rows of ``tokens``.

    With ``return_weights`` the T x T attention matrix comes back as well.
    """
    d = unit.d
    if tokens.data.ndim != 2 or tokens.shape[1] != d:
        raise DimensionError(f"attend: tokens {tokens.shape} do not match unit width {d}")
    return T.self_attention(tokens, unit.wq, unit.wk, unit.wv, return_weights=return_weights)


def attend_composite(unit: AttentionUnit, tokens: Tensor, return_weights: bool = False):
    """Same as :func:`attend`, spelled out with primitive ops (slower, more nodes)."""
    d = unit.d
    if tokens.data.ndim != 2 or tokens.shape[1] != d:
        raise DimensionError(f"attend: tokens {tokens.shape} do not match unit width {d}")
    q = T.matmul(tokens, unit.wq)
    k = T.matmul(tokens, unit.wk)
    v = T.matmul(tokens, unit.wv)
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(d))
    weights = T.softmax_rows(scores)
    out = T.matmul(weights, v)
    return (out, weights) if return_weights else out


def _check_strategy(model, expected):
    if model.strategy is not expected:
        raise UsageError(f"{expected.value} fusion called on a {model.strategy.value} model")


def _flatten(tokens: Tensor) -> Tensor:
    return T.reshape(tokens, (1, tokens.data.size))


def fuse_concat(model: FusionModel, tokens: Tensor) -> Tensor:
    _check_strategy(model, Strategy.CONCATENATION)
    return _flatten(tokens)


def fuse_unified(model: FusionModel, tokens: Tensor) -> Tensor:
    _check_strategy(model, Strategy.UNIFIED)
    (unit,) = model.attention_units().values()
    return _flatten(attend(unit, tokens))


def fuse_combinatorial(model: FusionModel, tokens: Tensor) -> Tensor:
    _check_strategy(model, Strategy.COMBINATORIAL)
    n = tokens.shape[0]
    if n < 2:
        raise UsageError("combinatorial attention is undefined for a single modality")
    units = model.attention_units()
    index = {m: i for i, m in enumerate(model.modalities)}
    pooled = []
    for a, b in model.pairs:
        pair = T.take_rows(tokens, (index[a], index[b]))
        pooled.append(T.mean_rows(attend(units[pair_key(a, b)], pair)))
    return pooled[0] if len(pooled) == 1 else T.concat_cols(pooled)


_FUSERS = {
    Strategy.CONCATENATION: fuse_concat,
    Strategy.UNIFIED: fuse_unified,
    Strategy.COMBINATORIAL: fuse_combinatorial,
}


def fuse(model: FusionModel, tokens: Tensor) -> Tensor:
    return _FUSERS[model.strategy](model, tokens)


def classify(model: FusionModel, fused: Tensor) -> tuple[Tensor, np.ndarray]:
    """Hidden relu layer then the 2-way classifier. Returns (logits, probabilities)."""
    fused = _as_row(fused)
    if fused.shape != (1, model.f_in):
        raise DimensionError(f"classify: fused vector has shape {fused.shape}, model expects (1, {model.f_in})")
    p = model.params
    hidden = T.relu(T.affine(fused, p["fc.W"], p["fc.b"]))
    logits = T.affine(hidden, p["cls.W"], p["cls.b"])
    z = logits.data[0] - logits.data[0].max()
    e = np.exp(z)
    return logits, e / e.sum()


def standardize(model: FusionModel, features: Mapping) -> dict:
    """Apply stored per-modality input standardization (identity when none is stored)."""
    out = {}
    for k, v in features.items():
        m = Modality.parse(k)
        if m not in model.modalities:
            continue
        x = np.asarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64).reshape(1, -1)
        stats = model.input_stats.get(m)
        if stats is not None:
            if x.shape[1] != stats[0].size:
                raise DataError(f"modality {m.value!r}: expected {stats[0].size} features, got {x.shape[1]}")
            x = (x - stats[0]) / stats[1]
        out[m] = x
    return out


def forward(model: FusionModel, features: Mapping) -> tuple[Tensor, np.ndarray]:
    tokens = project(model, standardize(model, features))
    return classify(model, fuse(model, tokens))


def predict(model: FusionModel, features: Mapping) -> tuple[int, np.ndarray]:
    """Predicted class and probabilities. Exact ties go to non-explicit."""
    _, probs = forward(model, features)
    return (EXPLICIT if probs[EXPLICIT] > 0.5 else NON_EXPLICIT), probs


def loss(model: FusionModel, features: Mapping, label: int) -> Tensor:
    logits, _ = forward(model, features)
    return T.cross_entropy_logits(logits, label)


# -- checkpoints -----------------------------------------------------------------


def model_to_dict(model: FusionModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "strategy": model.strategy.value,
        "modalities": [m.value for m in model.modalities],
        "dims": {"d": model.d, "h": model.h, "widths": {m.value: model.widths[m] for m in model.modalities}},
        "params": [
            {"name": name, "shape": list(t.shape), "data": t.data.ravel().tolist()}
            for name, t in model.params.items()
        ],
        "input_stats": {
            m.value: {"mean": mu.ravel().tolist(), "std": sd.ravel().tolist()}
            for m, (mu, sd) in sorted(model.input_stats.items(), key=lambda kv: kv[0].rank)
        },
    }


def model_from_dict(doc: dict) -> FusionModel:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError("not a trifuse checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {doc.get('version')!r}")
    strategy = Strategy.parse(doc["strategy"])
    modalities = canonical(doc["modalities"])
    dims = doc["dims"]
    widths = {Modality.parse(k): int(v) for k, v in dims["widths"].items()}
    d, h = int(dims["d"]), int(dims["h"])
    expected = param_shapes(strategy, modalities, widths, d, h)
    stored = doc["params"]
    if [p["name"] for p in stored] != list(expected):
        raise DataError("checkpoint parameter list does not match its declared architecture")
    params = {}
    for p in stored:
        shape = tuple(p["shape"])
        if shape != expected[p["name"]]:
            raise DataError(f"checkpoint parameter {p['name']} has shape {shape}, expected {expected[p['name']]}")
        data = np.array(p["data"], dtype=np.float64).reshape(shape)
        if not np.all(np.isfinite(data)):
            raise DataError(f"checkpoint parameter {p['name']} holds non-finite values")
        params[p["name"]] = Tensor(data, requires_grad=True)
    stats = {}
    for k, s in doc.get("input_stats", {}).items():
        stats[Modality.parse(k)] = (
            np.array(s["mean"], dtype=np.float64).reshape(1, -1),
            np.array(s["std"], dtype=np.float64).reshape(1, -1),
        )
    return FusionModel(strategy, modalities, widths, d, h, params, stats)


def save_checkpoint(model: FusionModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
    return path


def load_checkpoint(path) -> FusionModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON: {exc}") from None
    return model_from_dict(doc)
