"""Fusion-strategy comparison and modality ablation harnesses.

Both harnesses train one model per (row, seed), score it on the held-out
split and report the median of each F1 metric over seeds, together with
the per-seed values. Published numbers are carried along as reference
text only; nothing here compares against them.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from dataclasses import dataclass, field, replace

from .fusion import Modality, Strategy, all_subsets
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

METRICS = ("f1_micro", "f1_macro", "f1_weighted")
METRIC_LABELS = {"f1_micro": "F1-Micro", "f1_macro": "F1-Macro", "f1_weighted": "F1-Weighted"}

# Published held-out scores (micro, macro, weighted), shown for context.
REFERENCE_FUSION = {
    "Concatenation": (0.82, 0.81, 0.82),
    "Unified Attention": (0.82, 0.81, 0.82),
    "Combinatorial Attention": (0.83, 0.82, 0.83),
}
REFERENCE_ABLATION = {
    "Video": (0.70, 0.75, 0.77),
    "Audio": (0.61, 0.38, 0.46),
    "Language": (0.75, 0.73, 0.74),
    "Video + Audio": (0.78, 0.75, 0.77),
    "Video + Language": (0.81, 0.80, 0.81),
    "Audio + Language": (0.78, 0.78, 0.78),
    "Video + Audio + Language": (0.82, 0.81, 0.82),
}


def subset_label(modalities) -> str:
    return " + ".join(m.value.capitalize() for m in modalities)


@dataclass
class ReportRow:
    label: str
    key: str
    per_seed: dict = field(default_factory=dict)  # seed -> {metric: value}

    def median(self, metric: str) -> float:
        return statistics.median(v[metric] for v in self.per_seed.values())


@dataclass
class ExperimentReport:
    title: str
    row_header: str
    rows: list[ReportRow]
    seeds: list[int]
    config: dict
    reference: dict

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "split": "held-out",
            "aggregate": "median over seeds",
            "seeds": list(self.seeds),
            "config": self.config,
            "rows": [
                {
                    "label": r.label,
                    "key": r.key,
                    "median": {m: r.median(m) for m in METRICS},
                    "per_seed": {str(s): r.per_seed[s] for s in self.seeds},
                }
                for r in self.rows
            ],
            "reference": {k: dict(zip(METRICS, v)) for k, v in self.reference.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        labels = [r.label for r in self.rows]
        w = max(len(self.row_header), *(len(x) for x in labels))
        cols = [METRIC_LABELS[m] for m in METRICS]
        lines = [self.title, f"held-out split, median over seeds {', '.join(map(str, self.seeds))}", ""]
        lines.append(f"{self.row_header:<{w}}  " + "  ".join(f"{c:>11}" for c in cols))
        lines.append("-" * (w + 13 * len(cols)))
        for r in self.rows:
            lines.append(f"{r.label:<{w}}  " + "  ".join(f"{r.median(m):>11.4f}" for m in METRICS))
        lines.append("")
        lines.append("per-seed F1-micro:")
        for r in self.rows:
            vals = "  ".join(f"{s}:{r.per_seed[s]['f1_micro']:.4f}" for s in self.seeds)
            lines.append(f"  {r.label:<{w}}  {vals}")
        if self.reference:
            lines.append("")
            lines.append("reference only (published results on the real corpus, not reproduced here):")
            for k, v in self.reference.items():
                lines.append(f"  {k:<{w}}  " + "  ".join(f"{x:>11.2f}" for x in v))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([self.row_header.lower(), "seed", *METRICS])
        for r in self.rows:
            for s in self.seeds:
                wr.writerow([r.key, s, *(repr(r.per_seed[s][m]) for m in METRICS)])
            wr.writerow([r.key, "median", *(repr(r.median(m)) for m in METRICS)])
        return buf.getvalue()


def _resolve(dataset, seed):
    return dataset(seed) if callable(dataset) else dataset


def _run_rows(dataset, seeds, base: TrainConfig, variants, on_model=None) -> list[ReportRow]:
    rows = []
    for label, key, overrides in variants:
        row = ReportRow(label, key)
        for seed in seeds:
            train_set, test_set = _resolve(dataset, seed)
            cfg = replace(base, seed=seed, **overrides)
            result = train(cfg, train_set)
            if on_model is not None:
                on_model(key, seed, result.model)
            rep = evaluate(result.model, test_set)
            row.per_seed[seed] = {m: getattr(rep, m) for m in METRICS}
            log.info("%s seed %d: f1_micro=%.4f", label, seed, rep.f1_micro)
        rows.append(row)
    return rows


def _config_summary(base: TrainConfig) -> dict:
    return {
        "epochs": base.epochs,
        "lr": base.lr,
        "momentum": base.momentum,
        "batch_size": base.batch_size,
        "d": base.d,
        "h": base.h,
        "standardize": base.standardize,
    }


def run_fusion_comparison(
    dataset, seeds, base: TrainConfig | None = None, strategies=tuple(Strategy), on_model=None
) -> ExperimentReport:
    """Train every fusion strategy on all of ``base.modalities`` for each seed.

    ``dataset`` is a ``(train, test)`` pair, or a callable mapping a seed to
    one (so each seed may draw its own synthetic data). ``on_model(key,
    seed, model)`` is called with every trained model.
    """
    base = base or TrainConfig()
    seeds = list(seeds)
    variants = [(Strategy.parse(s).label, Strategy.parse(s).value, {"strategy": Strategy.parse(s)}) for s in strategies]
    rows = _run_rows(dataset, seeds, base, variants, on_model)
    cfg = _config_summary(base) | {"modalities": [m.value for m in base.modalities]}
    return ExperimentReport("Fusion strategy comparison", "Strategy", rows, seeds, cfg, REFERENCE_FUSION)


def run_modality_ablation(
    dataset, seeds, base: TrainConfig | None = None, subsets=None, on_model=None
) -> ExperimentReport:
    """Concatenation models on the unimodal, bimodal and trimodal subsets."""
    base = base or TrainConfig()
    seeds = list(seeds)
    subsets = subsets or all_subsets()
    variants = [
        (subset_label(s), "+".join(m.value for m in s), {"strategy": Strategy.CONCATENATION, "modalities": tuple(s)})
        for s in subsets
    ]
    rows = _run_rows(dataset, seeds, base, variants, on_model)
    cfg = _config_summary(base) | {"strategy": Strategy.CONCATENATION.value}
    return ExperimentReport("Modality ablation (concatenation)", "Modalities", rows, seeds, cfg, REFERENCE_ABLATION)


def row_for(report: ExperimentReport, key: str) -> ReportRow:
    for r in report.rows:
        if r.key == key:
            return r
    raise KeyError(key)


def unimodal_keys() -> list[str]:
    return [m.value for m in Modality]


