"""Binary confusion matrices and F1 aggregates."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import UsageError

CLASSES = (0, 1)


@dataclass(frozen=True)
class ClassStats:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    confusion: tuple[tuple[int, int], tuple[int, int]]  # [true][pred]
    f1_micro: float
    f1_macro: float
    f1_weighted: float
    per_class: tuple[ClassStats, ClassStats]

    @property
    def n(self) -> int:
        return sum(sum(row) for row in self.confusion)

    @property
    def accuracy(self) -> float:
        return (self.confusion[0][0] + self.confusion[1][1]) / self.n

    def to_dict(self) -> dict:
        return {
            "confusion": [list(r) for r in self.confusion],
            "f1_micro": self.f1_micro,
            "f1_macro": self.f1_macro,
            "f1_weighted": self.f1_weighted,
            "per_class": {str(c): asdict(s) for c, s in zip(CLASSES, self.per_class)},
        }


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise UsageError(f"label arrays differ in shape: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise UsageError("cannot score an empty evaluation set")
    if np.any((y_true < 0) | (y_true > 1)) or np.any((y_pred < 0) | (y_pred > 1)):
        raise UsageError("labels must be 0 (non-explicit) or 1 (explicit)")
    cm = np.zeros((2, 2), dtype=int)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def f1_report(y_true, y_pred) -> EvalReport:
    """Micro, macro and support-weighted F1. A zero denominator scores 0."""
    cm = confusion_matrix(y_true, y_pred)
    per_class = []
    for c in CLASSES:
        tp = cm[c, c]
        fp = cm[:, c].sum() - tp
        fn = cm[c, :].sum() - tp
        p = _ratio(tp, tp + fp)
        r = _ratio(tp, tp + fn)
        f1 = _ratio(2 * tp, 2 * tp + fp + fn)
        per_class.append(ClassStats(float(p), float(r), float(f1), int(cm[c, :].sum())))

    tp = int(np.trace(cm))
    wrong = int(cm.sum()) - tp
    # Summed over both classes every error is one FP and one FN.
    micro = _ratio(2 * tp, 2 * tp + 2 * wrong)
    macro = sum(s.f1 for s in per_class) / len(CLASSES)
    total = sum(s.support for s in per_class)
    weighted = sum(s.f1 * s.support for s in per_class) / total
    return EvalReport(
        tuple(tuple(int(x) for x in row) for row in cm),
        float(micro),
        float(macro),
        float(weighted),
        tuple(per_class),
    )
