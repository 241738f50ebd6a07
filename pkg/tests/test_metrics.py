import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trifuse.errors import UsageError
from trifuse.metrics import confusion_matrix, f1_report

from oracles import f1_bruteforce


def test_worked_example():
    rep = f1_report([1, 1, 0, 0], [1, 0, 0, 0])
    assert rep.per_class[1].f1 == pytest.approx(2 / 3, abs=1e-15)
    assert rep.per_class[0].f1 == pytest.approx(0.8, abs=1e-15)
    assert rep.f1_micro == 0.75
    assert rep.f1_macro == pytest.approx(0.7333333333, abs=1e-9)
    assert rep.f1_weighted == pytest.approx(0.7333333333, abs=1e-9)
    assert rep.confusion == ((2, 0), (1, 1))


def test_perfect_and_degenerate():
    rep = f1_report([0, 1, 1], [0, 1, 1])
    assert rep.f1_micro == rep.f1_macro == rep.f1_weighted == 1.0
    # class 1 never occurs nor is predicted: its F1 is 0 by convention
    rep = f1_report([0, 0], [0, 0])
    assert rep.per_class[1].f1 == 0.0 and rep.f1_macro == 0.5 and rep.f1_micro == 1.0


def test_errors():
    with pytest.raises(UsageError):
        f1_report([], [])
    with pytest.raises(UsageError):
        f1_report([0, 1], [0])
    with pytest.raises(UsageError):
        confusion_matrix([0, 2], [0, 1])


@pytest.mark.parametrize("seed", range(20))
def test_matches_bruteforce_oracle(seed):
    rng = np.random.default_rng(seed)
    for _ in range(10):
        n = int(rng.integers(1, 60))
        y, p = rng.integers(0, 2, n), rng.integers(0, 2, n)
        rep = f1_report(y, p)
        micro, macro, weighted, per = f1_bruteforce(y.tolist(), p.tolist())
        assert abs(rep.f1_micro - micro) <= 1e-12
        assert abs(rep.f1_macro - macro) <= 1e-12
        assert abs(rep.f1_weighted - weighted) <= 1e-12
        assert abs(rep.f1_micro - float(np.mean(y == p))) <= 1e-12


labels = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=80)


@settings(max_examples=200, deadline=None)
@given(labels)
def test_metric_identities(pairs):
    y = [a for a, _ in pairs]
    p = [b for _, b in pairs]
    rep = f1_report(y, p)
    assert sum(map(sum, rep.confusion)) == len(y)
    assert rep.per_class[1].support == sum(y)
    assert all(0 <= v <= 1 for v in (rep.f1_micro, rep.f1_macro, rep.f1_weighted))
    assert abs(rep.f1_micro - rep.accuracy) <= 1e-12
    if rep.per_class[0].support == rep.per_class[1].support:
        assert abs(rep.f1_weighted - rep.f1_macro) <= 1e-12
