import json
import sys
import textwrap

import numpy as np
import pytest

from trifuse import fusion as F
from trifuse.data import SegmentRecord
from trifuse.errors import AdapterError, ConfigError
from trifuse.fusion import Modality
from trifuse.summarize import (
    MockCaptioner,
    SubprocessCaptioner,
    pipeline_run,
    plan_chunks,
    summarize_segment,
)

from oracles import covers

V = Modality.VIDEO


def _seg(duration, sid="seg", start=0.0):
    return SegmentRecord(sid, "src", start, start + duration, "Riot", refs={V: "/media/src.frames"})


def test_plan_chunks_examples():
    assert len(plan_chunks(_seg(60)).chunks) == 6
    plan = plan_chunks(_seg(12))
    assert plan.chunks == [(0, 10), (10, 12)]
    assert covers(plan.chunks, 12)
    assert plan_chunks(_seg(8)).chunks == [(0, 8)]
    with pytest.raises(ConfigError):
        plan_chunks(_seg(8), 0)


@pytest.mark.parametrize("duration", [0.5, 9.99, 10, 10.01, 37.3, 60, 62.5])
def test_plan_chunks_partition_invariants(duration):
    chunks = plan_chunks(_seg(duration)).chunks
    assert covers(chunks, duration)
    assert all(b - a <= 10 + 1e-9 for a, b in chunks)
    assert all(x[0] < y[0] for x, y in zip(chunks, chunks[1:]))


def test_requests_use_source_clock():
    reqs = plan_chunks(_seg(25, "v_s001", start=60)).requests()
    assert [(r["start_s"], r["end_s"]) for r in reqs] == [(60, 70), (70, 80), (80, 85)]
    assert reqs[0]["frames_ref"] == "/media/src.frames" and reqs[2]["chunk_index"] == 2
    json.dumps(reqs)


def test_mock_summary_text():
    s = summarize_segment(plan_chunks(_seg(30, "abc")), MockCaptioner())
    assert s.text == "chunk 0 of abc. chunk 1 of abc. chunk 2 of abc."
    one = summarize_segment(plan_chunks(_seg(4, "x")), MockCaptioner())
    assert one.text == one.captions[0] == "chunk 0 of x."


class FailingAt:
    def __init__(self, index):
        self.index = index
        self.seen = []

    def caption(self, req):
        self.seen.append(req["chunk_index"])
        if req["chunk_index"] == self.index:
            raise AdapterError("boom", req["chunk_index"])
        return f"c{req['chunk_index']}"


def test_failure_carries_partial_captions():
    cap = FailingAt(2)
    with pytest.raises(AdapterError) as info:
        summarize_segment(plan_chunks(_seg(40)), cap)
    assert info.value.chunk_index == 2
    assert info.value.captions == ["c0", "c1"]
    assert cap.seen == [0, 1, 2]
    assert info.value.exit_code == 3


def _script(tmp_path, body):
    path = tmp_path / "cap.py"
    path.write_text(textwrap.dedent(body))
    return [sys.executable, str(path)]


def test_subprocess_captioner_round_trip(tmp_path):
    cmd = _script(
        tmp_path,
        """
        import json, sys
        req = json.loads(sys.stdin.readline())
        print(f"scene {req['chunk_index']} from {req['start_s']:g} to {req['end_s']:g}")
        """,
    )
    cap = SubprocessCaptioner(cmd, timeout_s=20)
    s = summarize_segment(plan_chunks(_seg(15, start=30)), cap)
    assert s.text == "scene 0 from 30 to 40 scene 1 from 40 to 45"
    assert cap.calls == 2


def test_subprocess_captioner_failure_and_timeout(tmp_path):
    failing = _script(
        tmp_path,
        """
        import json, sys
        req = json.loads(sys.stdin.readline())
        if req["chunk_index"] == 1:
            sys.stderr.write("model crashed\\n")
            sys.exit(4)
        print("ok")
        """,
    )
    with pytest.raises(AdapterError, match="status 4.*model crashed") as info:
        summarize_segment(plan_chunks(_seg(30)), SubprocessCaptioner(failing))
    assert info.value.chunk_index == 1 and info.value.captions == ["ok"]

    slow = [sys.executable, "-c", "import time; time.sleep(5)"]
    with pytest.raises(AdapterError, match="timed out") as info:
        SubprocessCaptioner(slow, timeout_s=0.3).caption({"chunk_index": 0})
    assert info.value.chunk_index == 0

    with pytest.raises(AdapterError):
        SubprocessCaptioner([str(tmp_path / "nope")]).caption({"chunk_index": 0})
    with pytest.raises(AdapterError, match="no caption"):
        SubprocessCaptioner([sys.executable, "-c", "pass"]).caption({"chunk_index": 0})
    with pytest.raises(ConfigError):
        SubprocessCaptioner("")


def _biased_model():
    """A 1-feature model whose prediction is explicit exactly when the input is positive."""
    model = F.init_model("concatenation", [V], {V: 1}, d=1, h=1)
    p = model.params
    p["proj.video.W"].data[...] = 1.0
    p["fc.W"].data[...] = 1.0
    p["cls.W"].data[...] = [[0.0, 1.0]]
    return model


def _records(values):
    return [
        SegmentRecord(f"s{i}", "src", 10 * i, 10 * i + 25, None, features={V: np.array([v])})
        for i, v in enumerate(values)
    ]


def test_pipeline_calls_captioner_only_for_explicit():
    model = _biased_model()
    cap = MockCaptioner()
    results = pipeline_run(_records([0.0, 0.0]), model, cap)
    assert cap.calls == 0 and all(r.summary is None for r in results)

    cap = MockCaptioner()
    results = pipeline_run(_records([2.0, 0.0, 3.0, -1.0]), model, cap, chunk_len_s=10)
    assert [r.explicit for r in results] == [True, False, True, False]
    assert cap.calls == 2 * 3
    assert results[2].summary.text == "chunk 0 of s2. chunk 1 of s2. chunk 2 of s2."


def test_pipeline_isolates_segment_errors():
    model = _biased_model()
    recs = _records([2.0, 2.0, 2.0])
    recs[1].features = {}
    cap = FailingAt(1)
    results = pipeline_run(recs, model, cap)
    assert results[1].error_kind == "DataError" and results[1].predicted is None
    assert results[0].error_kind == "AdapterError" and results[0].partial_captions == ["c0"]
    assert results[2].error_kind == "AdapterError"


def test_parallel_pipeline_matches_sequential():
    model = _biased_model()
    vals = [1.0, -1.0, 2.0, 3.0, 0.5, -2.0]
    seq = pipeline_run(_records(vals), model, MockCaptioner(), workers=1)
    cap = MockCaptioner()
    par = pipeline_run(_records(vals), model, cap, workers=4)
    assert [r.to_dict() for r in seq] == [r.to_dict() for r in par]
    assert cap.calls == 4 * 3
    with pytest.raises(ConfigError):
        pipeline_run(_records(vals), model, cap, workers=0)
