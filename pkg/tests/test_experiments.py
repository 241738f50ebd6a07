import json

import pytest

from trifuse import fusion as F
from trifuse.experiments import (
    REFERENCE_ABLATION,
    REFERENCE_FUSION,
    row_for,
    run_fusion_comparison,
    run_modality_ablation,
)
from trifuse.plotting import plot_experiment
from trifuse.synthetic import SynthSpec, synth_dataset
from trifuse.training import TrainConfig

BASE = TrainConfig(epochs=2, d=4, h=8)


def _data(seed):
    return synth_dataset(SynthSpec(n_train=30, n_test=12), seed)


def test_reference_tables_are_the_published_values():
    assert REFERENCE_FUSION["Concatenation"] == (0.82, 0.81, 0.82)
    assert REFERENCE_FUSION["Combinatorial Attention"] == (0.83, 0.82, 0.83)
    assert REFERENCE_ABLATION["Video + Audio + Language"] == (0.82, 0.81, 0.82)
    assert REFERENCE_ABLATION["Video + Language"] == (0.81, 0.80, 0.81)
    assert REFERENCE_ABLATION["Audio"] == (0.61, 0.38, 0.46)
    assert len(REFERENCE_ABLATION) == 7


def test_comparison_report_shape_and_determinism(tmp_path):
    seen = []
    rep = run_fusion_comparison(_data, [0, 1], BASE, on_model=lambda k, s, m: seen.append((k, s, m.strategy)))
    doc = rep.to_dict()
    assert [r["label"] for r in doc["rows"]] == ["Concatenation", "Unified Attention", "Combinatorial Attention"]
    assert all(len(r["median"]) == 3 for r in doc["rows"])
    assert doc["split"] == "held-out"
    assert [(k, s) for k, s, _ in seen] == [(k, s) for k in ("concatenation", "unified", "combinatorial") for s in (0, 1)]
    again = run_fusion_comparison(_data, [0, 1], BASE)
    assert rep.to_json() == again.to_json()
    assert rep.to_text() == again.to_text() and rep.to_csv() == again.to_csv()
    text = rep.to_text()
    assert "reference only" in text and "0.83" in text
    a = plot_experiment(rep, tmp_path / "a.png").read_bytes()
    b = plot_experiment(again, tmp_path / "b.png").read_bytes()
    assert a == b


def test_ablation_has_seven_rows():
    rep = run_modality_ablation(_data(0), [3], BASE)
    assert len(rep.rows) == 7
    assert [r.key for r in rep.rows][:3] == ["video", "audio", "language"]
    assert row_for(rep, "video+audio+language").label == "Video + Audio + Language"
    with pytest.raises(KeyError):
        row_for(rep, "smell")
    json.loads(rep.to_json())
    csv_lines = rep.to_csv().splitlines()
    assert len(csv_lines) == 1 + 7 * 2


def test_median_over_seeds():
    rep = run_fusion_comparison(_data, [0, 1, 2], BASE, strategies=[F.Strategy.CONCATENATION])
    row = rep.rows[0]
    vals = sorted(v["f1_micro"] for v in row.per_seed.values())
    assert row.median("f1_micro") == vals[1]
