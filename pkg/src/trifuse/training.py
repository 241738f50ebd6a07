"""Single-sample momentum-SGD training and held-out evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fusion as F
from . import tensor as T
from .errors import DataError, UsageError
from .fusion import FusionModel, Modality, Strategy
from .metrics import EvalReport, f1_report

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8


@dataclass
class TrainConfig:
    strategy: Strategy = Strategy.CONCATENATION
    modalities: tuple = tuple(Modality)
    epochs: int = 100
    lr: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 1
    seed: int = 0
    d: int = 16
    h: int = 64
    widths: dict | None = None
    standardize: bool = True

    def __post_init__(self):
        self.strategy = Strategy.parse(self.strategy)
        self.modalities = F.canonical(self.modalities)
        if not self.modalities:
            raise UsageError("at least one modality is required")
        if self.batch_size != 1:
            raise UsageError("only batch size 1 is supported")
        if self.epochs < 1:
            raise UsageError(f"epochs must be positive, got {self.epochs}")
        if self.lr < 0:
            raise UsageError(f"learning rate must be nonnegative, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise UsageError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.strategy is Strategy.COMBINATORIAL and len(self.modalities) < 2:
            raise UsageError("combinatorial attention needs at least two modalities")


@dataclass
class TrainResult:
    model: FusionModel
    initial_loss: float
    loss_trace: list[float] = field(default_factory=list)


def _labelled_inputs(records, modalities):
    xs, ys = [], []
    for r in records:
        if r.label is None:
            raise DataError(f"segment {r.segment_id}: no class label")
        row = {}
        for m in modalities:
            if m not in r.features:
                raise DataError(f"segment {r.segment_id}: missing {m.value} features")
            row[m] = np.asarray(r.features[m], dtype=np.float64).reshape(1, -1)
        xs.append(row)
        ys.append(r.label)
    return xs, ys


def infer_widths(xs, modalities) -> dict:
    widths = {}
    for m in modalities:
        sizes = {x[m].shape[1] for x in xs}
        if len(sizes) != 1:
            raise DataError(f"{m.value} feature vectors have inconsistent widths {sorted(sizes)}")
        widths[m] = sizes.pop()
    return widths


def fit_input_stats(xs, modalities) -> dict:
    stats = {}
    for m in modalities:
        X = np.concatenate([x[m] for x in xs], axis=0)
        mu = X.mean(axis=0, keepdims=True)
        sd = np.sqrt(((X - mu) ** 2).mean(axis=0, keepdims=True))
        sd[sd < STD_FLOOR] = 1.0
        stats[m] = (mu, sd)
    return stats


def _standardized(model, xs):
    out = []
    for x in xs:
        row = {}
        for m in model.modalities:
            v = x[m]
            if m in model.input_stats:
                mu, sd = model.input_stats[m]
                v = (v - mu) / sd
            row[m] = v
        out.append(row)
    return out


def _logits(model, x):
    return F.classify(model, F.fuse(model, F.project(model, x)))[0]


def mean_loss(model: FusionModel, xs, ys) -> float:
    total = 0.0
    for x, y in zip(xs, ys):
        total += T.cross_entropy_logits(_logits(model, x), y).item()
    return total / len(xs)


def train(config: TrainConfig, records) -> TrainResult:
    """Train a fusion model with one SGD step per sample, reshuffled every epoch.

    The model's weights come from ``config.seed``; the visiting order comes
    from an independent stream derived from the same seed.
    """
    records = list(records)
    if not records:
        raise UsageError("training set is empty")
    xs, ys = _labelled_inputs(records, config.modalities)
    widths = dict(config.widths) if config.widths else infer_widths(xs, config.modalities)
    widths = {Modality.parse(k): int(v) for k, v in widths.items()}
    model = F.init_model(config.strategy, config.modalities, widths, config.d, config.h, config.seed)
    for x, r in zip(xs, records):
        for m in model.modalities:
            if x[m].shape[1] != model.widths[m]:
                raise DataError(f"segment {r.segment_id}: {m.value} has {x[m].shape[1]} features, expected {model.widths[m]}")
    if config.standardize:
        model.input_stats = fit_input_stats(xs, model.modalities)
    xs = _standardized(model, xs)

    order_rng = np.random.Generator(np.random.PCG64([config.seed, 0x5EED]))
    opt = T.SGD(model.parameters(), lr=config.lr, momentum=config.momentum)
    result = TrainResult(model, mean_loss(model, xs, ys))
    n = len(xs)
    for epoch in range(config.epochs):
        total = 0.0
        for i in order_rng.permutation(n):
            with T.Tape() as tape:
                loss = T.cross_entropy_logits(_logits(model, xs[i]), ys[i])
            T.backward(tape, loss)
            opt.step()
            total += loss.item()
        result.loss_trace.append(total / n)
        if log.isEnabledFor(logging.DEBUG) and (epoch + 1) % 10 == 0:
            log.debug("%s epoch %d: mean loss %.6f", config.strategy.value, epoch + 1, total / n)
    return result


def predict_records(model: FusionModel, records) -> list[tuple[int, np.ndarray]]:
    out = []
    for r in records:
        missing = [m for m in model.modalities if m not in r.features]
        if missing:
            raise DataError(f"segment {r.segment_id}: missing {missing[0].value} features")
        out.append(F.predict(model, {m: r.features[m] for m in model.modalities}))
    return out


def evaluate(model: FusionModel, records) -> EvalReport:
    records = list(records)
    if not records:
        raise UsageError("evaluation set is empty")
    y_true = []
    for r in records:
        if r.label is None:
            raise DataError(f"segment {r.segment_id}: no class label")
        y_true.append(r.label)
    y_pred = [c for c, _ in predict_records(model, records)]
    return f1_report(y_true, y_pred)
