import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trifuse import tensor as T
from trifuse.errors import DimensionError, NonFiniteError, UsageError

from oracles import central_difference, cross_entropy_mp, matmul_loops, rel_error, softmax_mp

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_identity_and_hand_case():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(T.tensor(np.eye(2)), T.tensor(m)).data, m)
    assert T.matmul(T.tensor([[1.0, 2.0]]), T.tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


@pytest.mark.parametrize("seed", range(10))
def test_matmul_matches_triple_loop(seed):
    rng = np.random.default_rng(seed)
    m, k, n = rng.integers(1, 9, size=3)
    a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
    assert np.allclose(T.matmul(T.tensor(a), T.tensor(b)).data, matmul_loops(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(T.tensor(np.ones((2, 3))), T.tensor(np.ones((2, 3))))


def test_no_broadcasting():
    with pytest.raises(DimensionError):
        T.add(T.tensor(np.ones((2, 2))), T.tensor(np.ones((1, 2))))


def test_softmax_examples():
    assert T.softmax_rows(T.tensor([[0.0, 0.0]])).data.tolist() == [[0.5, 0.5]]
    assert T.softmax_rows(T.tensor([[1000.0, 1000.0]])).data.tolist() == [[0.5, 0.5]]
    got = T.softmax_rows(T.tensor([[1.0, 2.0, 3.0]])).data[0]
    assert np.allclose(got, softmax_mp([1, 2, 3]), rtol=0, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite), finite)
def test_softmax_rows_sum_to_one_and_shift_invariant(x, c):
    p = T.softmax_rows(T.tensor(x)).data
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    shifted = T.softmax_rows(T.tensor(x + c)).data
    assert np.allclose(p, shifted, rtol=0, atol=1e-12)


def test_cross_entropy_examples():
    assert math.isclose(T.cross_entropy_logits(T.tensor([[0.0, 0.0]]), 0).item(), math.log(2), abs_tol=1e-15)
    got = T.cross_entropy_logits(T.tensor([[10.0, -10.0]]), 0).item()
    assert math.isclose(got, cross_entropy_mp([10, -10], 0), rel_tol=1e-6)
    assert math.isclose(got, 2.06e-9, rel_tol=1e-2)
    logits = T.tensor([[0.0, 0.0]], requires_grad=True)
    with T.Tape() as tape:
        loss = T.cross_entropy_logits(logits, 1)
    T.backward(tape, loss)
    assert logits.grad.tolist() == [[0.5, -0.5]]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), finite, st.data())
def test_cross_entropy_nonnegative_and_ln_c_for_constant(c, value, data):
    assert math.isclose(T.cross_entropy_logits(T.tensor([[value] * c]), 0).item(), math.log(c), rel_tol=1e-12)
    row = data.draw(arrays(np.float64, (1, c), elements=finite))
    k = data.draw(st.integers(0, c - 1))
    assert T.cross_entropy_logits(T.tensor(row), k).item() >= 0


def test_cross_entropy_bad_class():
    with pytest.raises(UsageError):
        T.cross_entropy_logits(T.tensor([[0.0, 1.0]]), 2)


def test_backward_rejects_non_scalar_and_spent_tape():
    w = T.tensor(np.ones((2, 2)), requires_grad=True)
    with T.Tape() as tape:
        y = T.scale(w, 2.0)
    with pytest.raises(UsageError):
        T.backward(tape, y)
    with T.Tape() as tape:
        loss = T.sum_all(T.scale(w, 2.0))
    T.backward(tape, loss)
    assert np.array_equal(w.grad, np.full((2, 2), 2.0))
    with pytest.raises(UsageError):
        T.backward(tape, loss)


def test_constant_graph_writes_no_gradients():
    x = T.tensor(np.ones((2, 2)))
    with T.Tape() as tape:
        loss = T.sum_all(T.relu(x))
    assert T.backward(tape, loss) == []
    assert x.grad is None


def test_linear_gradient_is_exact():
    c = np.array([[0.3, -1.7, 2.5]])
    w = T.tensor(np.array([[1.0], [2.0], [3.0]]), requires_grad=True)
    with T.Tape() as tape:
        loss = T.matmul(T.tensor(c), w)
    T.backward(tape, loss)
    assert np.array_equal(w.grad, c.T)


def test_no_recording_outside_tape():
    w = T.tensor(np.ones((1, 1)), requires_grad=True)
    loss = T.scale(w, 3.0)
    with T.Tape() as tape:
        pass
    with pytest.raises(UsageError):
        T.backward(tape, loss)


def test_gradients_are_overwritten_not_accumulated():
    w = T.tensor([[2.0]], requires_grad=True)
    for _ in range(2):
        with T.Tape() as tape:
            loss = T.scale(w, 5.0)
        T.backward(tape, loss)
    assert w.grad.tolist() == [[5.0]]


def test_non_finite_loss_is_an_error():
    with pytest.raises(NonFiniteError):
        T.cross_entropy_logits(T.tensor([[np.inf, 0.0]]), 0)


# -- finite differences --------------------------------------------------------


def _fd_check(build, shapes, seed, draws=50, tol=1e-4, positive=False):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        arrs = [rng.normal(size=s) for s in shapes]
        if positive:
            arrs = [a + np.sign(a) * 0.05 for a in arrs]
        leaves = [T.tensor(a, requires_grad=True) for a in arrs]
        with T.Tape() as tape:
            loss = build(*leaves)
        T.backward(tape, loss)

        def f():
            return build(*[T.tensor(a) for a in arrs]).item()

        numeric = central_difference(f, arrs)
        for leaf, num in zip(leaves, numeric):
            worst = max(worst, rel_error(leaf.grad, num))
    assert worst < tol, worst


def _probe(shape, seed=99):
    return T.tensor(np.random.default_rng(seed).normal(size=shape))


OPS = {
    "matmul": (lambda a, b: T.sum_all(T.matmul(T.relu(a), b)), [(3, 4), (4, 2)]),
    "add": (lambda a, b: T.sum_all(T.matmul(T.add(a, b), _probe((3, 1)))), [(2, 3), (2, 3)]),
    "scale": (lambda a: T.sum_all(T.matmul(T.scale(a, -1.3), _probe((3, 1)))), [(2, 3)]),
    "relu": (lambda a: T.sum_all(T.matmul(T.relu(a), _probe((3, 1)))), [(2, 3)]),
    "transpose": (lambda a: T.sum_all(T.matmul(T.transpose(a), _probe((2, 1)))), [(2, 3)]),
    "concat_rows": (lambda a, b: T.sum_all(T.matmul(T.concat_rows([a, b]), _probe((3, 1)))), [(1, 3), (2, 3)]),
    "concat_cols": (lambda a, b: T.sum_all(T.matmul(T.concat_cols([a, b]), _probe((5, 1)))), [(2, 3), (2, 2)]),
    "take_rows": (lambda a: T.sum_all(T.matmul(T.take_rows(a, [2, 0, 2]), _probe((2, 1)))), [(3, 2)]),
    "reshape": (lambda a: T.sum_all(T.matmul(T.reshape(a, (1, 6)), _probe((6, 1)))), [(2, 3)]),
    "mean_rows": (lambda a: T.sum_all(T.matmul(T.mean_rows(a), _probe((3, 1)))), [(4, 3)]),
    "softmax_rows": (lambda a: T.sum_all(T.matmul(T.softmax_rows(a), _probe((4, 1)))), [(3, 4)]),
    "affine": (lambda x, w, b: T.sum_all(T.matmul(T.affine(x, w, b), _probe((2, 1)))), [(3, 4), (4, 2), (3, 2)]),
    "self_attention": (
        lambda x, q, k, v: T.sum_all(T.matmul(T.self_attention(x, q, k, v), _probe((3, 1)))),
        [(3, 3), (3, 3), (3, 3), (3, 3)],
    ),
    "cross_entropy": (lambda z: T.cross_entropy_logits(z, 1), [(1, 3)]),
    "composite_relu": (lambda x, w: T.sum_all(T.relu(T.matmul(x, w))), [(3, 4), (4, 2)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_finite_difference(name):
    build, shapes = OPS[name]
    # relu kinks: keep inputs away from 0 so central differences are valid
    _fd_check(build, shapes, seed=len(name), positive=name in ("relu", "matmul", "composite_relu"))


# -- optimiser -------------------------------------------------------------


def test_sgd_vanilla_step():
    p = T.tensor([[1.0]])
    v = [np.zeros((1, 1))]
    T.sgd_step([p], [np.array([[2.0]])], v, lr=0.1, momentum=0.0)
    assert p.item() == pytest.approx(0.8, abs=1e-15)


def test_sgd_momentum_recurrence():
    p = T.tensor([[0.0]])
    v = [np.zeros((1, 1))]
    trace = []
    for _ in range(2):
        T.sgd_step([p], [np.array([[1.0]])], v, lr=1.0, momentum=0.9)
        trace.append(p.item())
    assert trace == pytest.approx([-1.0, -2.9], abs=1e-15)


def test_sgd_zero_gradient_decays_velocity():
    p = T.tensor([[3.0, 4.0]])
    v = [np.array([[0.0, 0.0]])]
    T.sgd_step([p], [np.zeros((1, 2))], v, lr=0.5, momentum=0.9)
    assert p.data.tolist() == [[3.0, 4.0]]
    v = [np.array([[1.0, -2.0]])]
    before = p.data.copy()
    T.sgd_step([p], [np.zeros((1, 2))], v, lr=1e-9, momentum=0.9)
    assert v[0][0].tolist() == pytest.approx([0.9, -1.8], abs=1e-15)
    assert np.allclose(p.data, before - 1e-9 * v[0])


def test_sgd_argument_errors():
    p = T.tensor([[1.0, 2.0]])
    with pytest.raises(DimensionError):
        T.sgd_step([p], [np.zeros((2, 1))], [np.zeros((1, 2))], 0.1, 0.0)
    with pytest.raises(DimensionError):
        T.sgd_step([p], [np.zeros((1, 2))], [np.zeros((1, 3))], 0.1, 0.0)
    with pytest.raises(UsageError):
        T.sgd_step([p], [np.zeros((1, 2))], [np.zeros((1, 2))], 0.0, 0.0)
    with pytest.raises(UsageError):
        T.sgd_step([p], [np.zeros((1, 2))], [np.zeros((1, 2))], 0.1, 1.0)


def test_sgd_class_matches_function():
    rng = np.random.default_rng(3)
    a = [T.tensor(rng.normal(size=(2, 3))), T.tensor(rng.normal(size=(1, 3)))]
    b = [T.tensor(x.data.copy()) for x in a]
    opt = T.SGD(a, lr=0.05, momentum=0.9)
    vel = [np.zeros_like(x.data) for x in b]
    for _ in range(3):
        gs = [rng.normal(size=x.shape) for x in a]
        for x, g in zip(a, gs):
            x.grad = g
        opt.step()
        T.sgd_step(b, gs, vel, 0.05, 0.9)
    for x, y in zip(a, b):
        assert np.allclose(x.data, y.data, rtol=0, atol=1e-14)
