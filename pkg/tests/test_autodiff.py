"""Tape-engine checks: every op against central differences plus known values."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import driftlab.autodiff as ad
from driftlab.errors import ShapeError, UsageError

from conftest import assert_grads_close, fd_check, numeric_grad


def _rng(seed=0):
    return np.random.default_rng(seed)


def _p(shape, seed=0, scale=0.8):
    t = ad.Tensor(_rng(seed).uniform(-scale, scale, size=shape),
                  requires_grad=True)
    return t


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------


def test_unary_ops_match_finite_differences():
    x = _p((5,), seed=1)
    cases = {
        "tanh": lambda: ad.sum_all(ad.tanh(x)),
        "sigmoid": lambda: ad.sum_all(ad.sigmoid(x)),
        "relu": lambda: ad.sum_all(ad.relu(ad.add_const(x, 0.3))),
        "exp": lambda: ad.sum_all(ad.exp(x)),
        "square": lambda: ad.sum_all(ad.square(x)),
        "neg": lambda: ad.sum_all(ad.neg(x)),
    }
    for name, f in cases.items():
        fd_check(f, {name: x})


def test_positive_domain_ops_match_finite_differences():
    x = ad.Tensor(_rng(2).uniform(0.5, 2.0, size=(6,)), requires_grad=True)
    for name, f in {
        "log": lambda: ad.sum_all(ad.log(x)),
        "sqrt": lambda: ad.sum_all(ad.sqrt(x)),
        "recip": lambda: ad.sum_all(ad.recip(x)),
    }.items():
        fd_check(f, {name: x})


def test_binary_ops_match_finite_differences():
    a, b = _p((4,), 3), _p((4,), 4)
    for name, f in {
        "add": lambda: ad.sum_all(ad.add(a, b)),
        "sub": lambda: ad.sum_all(ad.sub(a, b)),
        "mul": lambda: ad.sum_all(ad.mul(a, b)),
        "dot": lambda: ad.dot(a, b),
    }.items():
        fd_check(f, {"a": a, "b": b})


def test_matrix_ops_match_finite_differences():
    w = _p((3, 4), 5)
    x = _p((4,), 6)
    x3 = _p((3,), 6)
    m = _p((2, 4), 7)
    fd_check(lambda: ad.sum_all(ad.matvec(w, x)), {"w": w, "x": x})
    fd_check(lambda: ad.sum_all(ad.vecmat(x3, w.detach())), {"x3": x3})
    fd_check(lambda: ad.sum_all(ad.matmul_nt(m, w.detach())), {"m": m})
    fd_check(lambda: ad.sum_all(ad.matmul_nt(m.detach(), w)), {"w": w})


def test_structural_ops_match_finite_differences():
    a, b = _p((3,), 8), _p((3,), 9)
    emb = _p((4, 3), 10)
    fd_check(lambda: ad.sum_all(ad.concat((a, b))), {"a": a, "b": b})
    fd_check(lambda: ad.sum_all(ad.stack_rows([a, b])), {"a": a, "b": b})
    fd_check(lambda: ad.pick(a, 1), {"a": a})
    fd_check(lambda: ad.sum_all(ad.row(emb, 2)), {"emb": emb})
    fd_check(lambda: ad.scale(ad.dot(a, a), ad.dot(b, b)), {"a": a, "b": b})
    fd_check(lambda: ad.sum_all(ad.mul_const(a, 2.5)), {"a": a})
    fd_check(lambda: ad.sum_all(ad.mul_const(a, np.array([1.0, 0.0, 2.0]))),
             {"a": a})


def test_softmax_known_values():
    x = ad.constant([1.0, 2.0, 3.0])
    s = ad.softmax(x)
    np.testing.assert_allclose(
        s.data, [0.09003057, 0.24472847, 0.66524096], atol=1e-5)
    assert s.data.sum() == pytest.approx(1.0, abs=1e-12)
    ls = ad.log_softmax(x)
    np.testing.assert_allclose(np.exp(ls.data), s.data, atol=1e-12)


def test_softmax_family_matches_finite_differences():
    x = _p((6,), 11)
    w = _p((6,), 12)
    fd_check(lambda: ad.dot(ad.softmax(x), w.detach()), {"x": x})
    fd_check(lambda: ad.dot(ad.log_softmax(x), w.detach()), {"x": x})
    fd_check(lambda: ad.entropy_of_logits(x), {"x": x})


def test_entropy_of_logits_matches_definition():
    x = _p((7,), 13)
    with ad.no_grad():
        h = float(ad.entropy_of_logits(x).data)
    p = np.exp(x.data - x.data.max())
    p /= p.sum()
    assert h == pytest.approx(float(-(p * np.log(p)).sum()), abs=1e-12)


def test_sum_and_dot_analytic_gradients():
    a, b = _p((5,), 14), _p((5,), 15)
    with ad.record() as tape:
        ad.backward(ad.sum_all(a), tape)
    np.testing.assert_array_equal(a.grad, np.ones(5))
    a.grad = None
    with ad.record() as tape:
        ad.backward(ad.dot(a, b), tape)
    np.testing.assert_allclose(a.grad, b.data, atol=1e-15)
    np.testing.assert_allclose(b.grad, a.data, atol=1e-15)


# ---------------------------------------------------------------------------
# fused network ops
# ---------------------------------------------------------------------------


def test_gru_cell_matches_finite_differences():
    cell = ad.GRUCell.init(3, 4, _rng(16))
    x = _p((3,), 17)
    h = _p((4,), 18)
    v = _rng(19).normal(size=4)
    params = dict(cell.tensors("g"), x=x, h=h)
    fd_check(lambda: ad.dot(ad.gru_cell(x, h, cell), ad.constant(v)), params)


def test_gru_cell_zero_params_fixed_point():
    # All-zero gates: z = sigmoid(0) = 1/2, n = tanh(0) = 0, so h' = h/2.
    cell = ad.GRUCell.init(3, 4, _rng(20))
    for t in cell.tensors("g").values():
        t.data[...] = 0.0
    h = ad.constant(np.array([1.0, -2.0, 0.5, 4.0]))
    out = ad.gru_cell(ad.constant(np.zeros(3)), h, cell)
    np.testing.assert_allclose(out.data, h.data / 2.0, atol=1e-15)


def test_additive_attention_matches_manual_computation():
    rng = _rng(21)
    T, hdim = 3, 4
    state = _p((hdim,), 22)
    annotations = ad.Tensor(rng.normal(size=(T, hdim)), requires_grad=True)
    att_w = _p((hdim, hdim), 23)
    att_v = _p((hdim,), 24)
    att_u = _p((hdim, hdim), 25)
    proj = ad.matmul_nt(annotations, att_u)
    ctx, weights = ad.additive_attention(state, annotations, proj, att_w, att_v)
    scores = np.tanh(state.data @ att_w.data.T
                     + annotations.data @ att_u.data.T) @ att_v.data
    e = np.exp(scores - scores.max())
    w_manual = e / e.sum()
    np.testing.assert_allclose(weights, w_manual, atol=1e-12)
    np.testing.assert_allclose(ctx.data, w_manual @ annotations.data, atol=1e-12)


def test_additive_attention_matches_finite_differences():
    rng = _rng(26)
    state = _p((4,), 27)
    annotations = ad.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    att_w, att_u, att_v = _p((4, 4), 28), _p((4, 4), 29), _p((4,), 30)
    v = rng.normal(size=4)

    def f():
        proj = ad.matmul_nt(annotations, att_u)
        ctx, _ = ad.additive_attention(state, annotations, proj, att_w, att_v)
        return ad.dot(ctx, ad.constant(v))

    fd_check(f, {"state": state, "annotations": annotations,
                 "att_w": att_w, "att_u": att_u, "att_v": att_v})


def test_mlp2_scalar_matches_finite_differences():
    x = _rng(31).normal(size=5)
    w1, b1 = _p((4, 5), 32), _p((4,), 33)
    w2, b2 = _p((4,), 34), _p((), 35)
    fd_check(lambda: ad.mlp2_scalar(x, w1, b1, w2, b2),
             {"w1": w1, "b1": b1, "w2": w2, "b2": b2})


def test_weighted_sum_scalars_matches_finite_differences():
    a, b = _p((3,), 36), _p((3,), 37)
    coeffs = [0.5, -1.25, 2.0]

    def f():
        nodes = [ad.dot(a, b), ad.sum_all(ad.tanh(a)), ad.pick(b, 0)]
        return ad.weighted_sum_scalars(nodes, coeffs)

    fd_check(f, {"a": a, "b": b})


def test_squared_error_to_consts_matches_finite_differences():
    a = _p((4,), 38)
    targets = [0.3, -1.0, 2.0]

    def f():
        nodes = [ad.pick(a, 0), ad.pick(a, 1), ad.dot(a, a)]
        return ad.squared_error_to_consts(nodes, targets)

    fd_check(f, {"a": a})
    with ad.no_grad():
        got = float(f().data)
    vals = np.array([a.data[0], a.data[1], float(a.data @ a.data)])
    assert got == pytest.approx(float(((vals - targets) ** 2).sum()), abs=1e-12)


# ---------------------------------------------------------------------------
# tape mechanics
# ---------------------------------------------------------------------------


def test_backward_rejects_nonscalar_loss():
    x = _p((3,), 39)
    with ad.record() as tape:
        y = ad.tanh(x)
        with pytest.raises(UsageError):
            ad.backward(y, tape)


def test_no_grad_suppresses_recording():
    x = _p((3,), 40)
    with ad.record() as tape:
        with ad.no_grad():
            ad.sum_all(ad.tanh(x))
        assert len(tape) == 0
        loss = ad.sum_all(ad.tanh(x))
        assert len(tape) == 2
        ad.backward(loss, tape)
    assert x.grad is not None


def test_gradients_accumulate_across_reuse():
    x = _p((), 41)
    with ad.record() as tape:
        y = ad.add(x, x)
        ad.backward(y, tape)
    assert float(x.grad) == pytest.approx(2.0)


def test_unused_parameter_reads_zero_gradient():
    x, unused = _p((3,), 42), _p((3,), 43)
    with ad.record() as tape:
        ad.backward(ad.sum_all(x), tape)
    assert unused.grad is None
    np.testing.assert_array_equal(ad.grad_of(unused), np.zeros(3))


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        ad.add(ad.constant(np.zeros(3)), ad.constant(np.zeros(4)))
    with pytest.raises(ShapeError):
        ad.matvec(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros(4)))


def test_backward_is_deterministic_bitwise():
    def run():
        x = ad.Tensor(np.linspace(-1, 1, 12).reshape(3, 4), requires_grad=True)
        w = ad.Tensor(np.linspace(0.5, -0.5, 4), requires_grad=True)
        with ad.record() as tape:
            h = ad.tanh(ad.matvec(x, w))
            loss = ad.dot(h, h)
            ad.backward(loss, tape)
        return float(loss.data), x.grad.copy(), w.grad.copy()

    l1, gx1, gw1 = run()
    l2, gx2, gw2 = run()
    assert l1 == l2
    assert (gx1 == gx2).all() and (gw1 == gw2).all()


# ---------------------------------------------------------------------------
# property tests
# ---------------------------------------------------------------------------

finite_vec = st.lists(
    st.floats(min_value=-10, max_value=10, allow_nan=False),
    min_size=2, max_size=8)


@settings(deadline=None, max_examples=60)
@given(finite_vec)
def test_softmax_normalizes_and_stays_positive(xs):
    s = ad.softmax(ad.constant(xs))
    assert s.data.sum() == pytest.approx(1.0, abs=1e-9)
    assert (s.data > 0).all()


@settings(deadline=None, max_examples=60)
@given(finite_vec)
def test_log_softmax_agrees_with_softmax(xs):
    ls = ad.log_softmax(ad.constant(xs)).data
    s = ad.softmax(ad.constant(xs)).data
    np.testing.assert_allclose(np.exp(ls), s, atol=1e-12)
    assert ls.max() <= 1e-12


@settings(deadline=None, max_examples=60)
@given(finite_vec)
def test_entropy_nonnegative_and_bounded(xs):
    h = float(ad.entropy_of_logits(ad.constant(xs)).data)
    assert -1e-12 <= h <= np.log(len(xs)) + 1e-12


@settings(deadline=None, max_examples=40)
@given(finite_vec, st.integers(min_value=0, max_value=7))
def test_pick_gradient_is_one_hot(xs, i):
    i = i % len(xs)
    x = ad.Tensor(xs, requires_grad=True)
    with ad.record() as tape:
        ad.backward(ad.pick(x, i), tape)
    expected = np.zeros(len(xs))
    expected[i] = 1.0
    np.testing.assert_array_equal(x.grad, expected)


@settings(deadline=None, max_examples=30)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_sum_all_gradient_is_ones(seed):
    x = ad.Tensor(np.random.default_rng(seed).normal(size=(3, 2)),
                  requires_grad=True)
    with ad.record() as tape:
        ad.backward(ad.sum_all(x), tape)
    np.testing.assert_array_equal(x.grad, np.ones((3, 2)))
