import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hierzoom.errors import ConfigurationError, DimensionError, UsageError
from hierzoom.tensor import (
    BCE_EPS,
    Tensor,
    backward,
    binary_cross_entropy,
    build_tape,
    concat,
    conv2d,
    elu,
    exp,
    leaky_relu,
    log,
    matmul,
    maxpool2d,
    no_grad,
    relu,
    softmax_rows,
    take,
)

from helpers import check_op_grad, numeric_grad, rel_err

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# ------------------------------------------------------------------ matmul


def test_matmul_identity_and_zero():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(a, Tensor(np.eye(2))).data, [[1, 2], [3, 4]])
    assert np.array_equal(matmul(a, Tensor(np.zeros((2, 2)))).data, np.zeros((2, 2)))


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    ref = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(4):
                ref[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(matmul(Tensor(a), Tensor(b)).data - ref)) <= 1e-12


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_rejects_non_2d():
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))


def test_matmul_gradient():
    check_op_grad(matmul, (4, 3), (3, 5))


# ------------------------------------------------------------------ conv2d


def test_conv_identity_kernel():
    x = np.random.default_rng(2).normal(size=(1, 5, 6))
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
    assert np.array_equal(out.data, x)


def test_conv_zero_kernel_bias():
    out = conv2d(Tensor(np.random.default_rng(3).normal(size=(1, 4, 4))), Tensor(np.zeros((1, 1, 3, 3))), Tensor([2.5]))
    assert out.shape == (1, 2, 2)
    assert np.all(out.data == 2.5)


def _sliding_window_conv(x, w, b, stride, pad):
    c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho, wo = (h + 2 * pad - k) // stride + 1, (wd + 2 * pad - k) // stride + 1
    out = np.zeros((f, ho, wo))
    for fi in range(f):
        for i in range(ho):
            for j in range(wo):
                win = xp[:, i * stride : i * stride + k, j * stride : j * stride + k]
                out[fi, i, j] = np.sum(win * w[fi]) + b[fi]
    return out


@pytest.mark.parametrize("side,stride,pad", [(8, 1, 0), (8, 1, 1), (9, 2, 1)])
def test_conv_matches_sliding_window(side, stride, pad):
    rng = np.random.default_rng(4)
    x, w, b = rng.normal(size=(2, side, side)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    got = conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad).data
    assert np.max(np.abs(got - _sliding_window_conv(x, w, b, stride, pad))) <= 1e-12


def test_conv_no_kernel_flip():
    x = np.zeros((1, 3, 3))
    x[0, 0, 0] = 1.0
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 0, 0] = 7.0
    assert conv2d(Tensor(x), Tensor(w), Tensor([0.0])).data[0, 0, 0] == 7.0


def test_conv_non_integral_extent():
    with pytest.raises(ConfigurationError):
        conv2d(Tensor(np.ones((1, 6, 6))), Tensor(np.ones((1, 1, 3, 3))), Tensor([0.0]), stride=2)


def test_conv_kernel_larger_than_input():
    with pytest.raises(ConfigurationError):
        conv2d(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))), Tensor([0.0]))


def test_conv_batched_equals_unbatched():
    rng = np.random.default_rng(5)
    x, w, b = rng.normal(size=(3, 2, 6, 6)), rng.normal(size=(4, 2, 3, 3)), rng.normal(size=4)
    batched = conv2d(Tensor(x), Tensor(w), Tensor(b), 1, 1).data
    for n in range(3):
        assert np.allclose(batched[n], conv2d(Tensor(x[n]), Tensor(w), Tensor(b), 1, 1).data, atol=1e-13)


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
def test_conv_gradient(stride, pad):
    check_op_grad(lambda x, w, b: conv2d(x, w, b, stride, pad), (2, 2, 5, 5), (3, 2, 3, 3), (3,))


# ----------------------------------------------------------------- maxpool


def test_maxpool_single_window():
    assert maxpool2d(Tensor([[[1.0, 2.0], [3.0, 4.0]]]), 2).data.tolist() == [[[4.0]]]


def test_maxpool_constant():
    out = maxpool2d(Tensor(np.full((2, 4, 6), 3.25)), 2)
    assert out.shape == (2, 2, 3) and np.all(out.data == 3.25)


def test_maxpool_matches_window_scan():
    x = np.random.default_rng(6).normal(size=(1, 8, 8))
    got = maxpool2d(Tensor(x), 2).data
    for i in range(4):
        for j in range(4):
            assert got[0, i, j] == x[0, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()


def test_maxpool_tie_routes_to_first_occurrence():
    x = Tensor(np.full((1, 2, 2), 5.0), requires_grad=True)
    backward(maxpool2d(x, 2).sum())
    assert x.grad.tolist() == [[[1.0, 0.0], [0.0, 0.0]]]


def test_maxpool_non_divisible():
    with pytest.raises(ConfigurationError):
        maxpool2d(Tensor(np.ones((1, 5, 4))), 2)


def test_maxpool_gradient():
    check_op_grad(lambda x: maxpool2d(x, 2), (2, 3, 4, 6))


# -------------------------------------------------------------- activations


def test_leaky_relu_examples():
    assert leaky_relu(Tensor([2.0, -2.0]), 0.2).data.tolist() == [2.0, pytest.approx(-0.4)]
    assert leaky_relu(Tensor([-1.0, 0.0, 1.0]), 0.0).data.tolist() == [0.0, 0.0, 1.0]


def test_leaky_relu_slope_one_at_zero():
    x = Tensor([0.0], requires_grad=True)
    backward(leaky_relu(x, 0.2).sum())
    assert x.grad.tolist() == [1.0]


def test_leaky_relu_alpha_range():
    with pytest.raises(ConfigurationError):
        leaky_relu(Tensor([1.0]), 1.0)


def test_leaky_relu_gradient_tight():
    check_op_grad(lambda x: leaky_relu(x, 0.2), (6, 7), tol=1e-6, seed=9)


@pytest.mark.parametrize("fn", [relu, elu, exp, lambda x: leaky_relu(x, 0.3)])
def test_elementwise_gradients(fn):
    check_op_grad(fn, (4, 5), seed=10)


def test_log_gradient():
    check_op_grad(log, (3, 4), offset=3.0, scale=0.5)


def test_broadcast_arithmetic_gradient():
    check_op_grad(lambda a, b: a * b + a - b, (4, 3), (3,))
    check_op_grad(lambda a, b: (a - b) * a, (4, 3), (4, 1))


def test_take_concat_gradient():
    check_op_grad(lambda x: take(x, np.array([2, 0, 2, 1])), (3, 4))
    check_op_grad(lambda a, b: concat([a, b], axis=0), (2, 3), (4, 3))
    check_op_grad(lambda a, b: concat([a, b], axis=1), (2, 3), (2, 1))


def test_sum_mean_reshape_gradient():
    check_op_grad(lambda x: x.sum(axis=0, keepdims=True) * x.mean(axis=1, keepdims=True), (3, 4))
    check_op_grad(lambda x: x.reshape(6, 2), (3, 4))


# ----------------------------------------------------------------- softmax


def test_softmax_symmetric_row():
    assert softmax_rows(Tensor([[0.0, 0.0]])).data.tolist() == [[0.5, 0.5]]


def test_softmax_stable():
    out = softmax_rows(Tensor([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(out))
    assert out[0, 0] == pytest.approx(1.0) and out[0, 1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_matches_direct_formula():
    x = np.random.default_rng(11).normal(size=(4, 3))
    got = softmax_rows(Tensor(x)).data
    ref = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
    assert np.max(np.abs(got - ref)) <= 1e-12
    assert np.max(np.abs(got.sum(axis=1) - 1)) <= 1e-12


def test_softmax_mask_zeroes_entries():
    x = Tensor(np.random.default_rng(12).normal(size=(3, 3)), requires_grad=True)
    mask = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 1]], dtype=bool)
    out = softmax_rows(x, mask)
    assert np.all(out.data[~mask] == 0.0)
    backward((out * Tensor(np.arange(9.0).reshape(3, 3))).sum())
    assert np.all(x.grad[~mask] == 0.0)


def test_softmax_gradient():
    check_op_grad(softmax_rows, (4, 3))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(x):
    out = softmax_rows(Tensor(x)).data
    assert np.all((out >= 0) & (out <= 1))
    assert np.max(np.abs(out.sum(axis=1) - 1)) <= 1e-12


# --------------------------------------------------------------------- BCE


def test_bce_examples():
    assert binary_cross_entropy(Tensor([1 - BCE_EPS]), [1]).item() == pytest.approx(0.0, abs=1e-6)
    assert binary_cross_entropy(Tensor([0.5]), [1]).item() == pytest.approx(0.693147, abs=1e-6)
    assert binary_cross_entropy(Tensor([0.9, 0.1]), [1, 0]).item() == pytest.approx(0.105361, abs=1e-6)


def test_bce_hand_values_exact():
    assert binary_cross_entropy(Tensor([0.5]), [1]).item() == pytest.approx(math.log(2), rel=1e-14)


def test_bce_clamps_extremes():
    assert np.isfinite(binary_cross_entropy(Tensor([0.0, 1.0]), [1, 0]).item())


def test_bce_pos_weight_scales_positive_terms():
    p = Tensor([0.3, 0.8])
    plain = -(math.log(0.3) + math.log(0.2)) / 2
    weighted = -(3 * math.log(0.3) + math.log(0.2)) / 2
    assert binary_cross_entropy(p, [1, 0]).item() == pytest.approx(plain, rel=1e-14)
    assert binary_cross_entropy(p, [1, 0], pos_weight=3.0).item() == pytest.approx(weighted, rel=1e-14)


def test_bce_gradient():
    rng = np.random.default_rng(13)
    y = (rng.random(6) > 0.5).astype(float)
    check_op_grad(lambda p: binary_cross_entropy(p, y) * 1.0, (6,), scale=0.2, offset=0.5)


def test_bce_shape_mismatch():
    with pytest.raises(DimensionError):
        binary_cross_entropy(Tensor([0.5, 0.5]), [1])


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=20),
)
def test_bce_nonnegative_and_zero_only_at_match(pairs):
    p = np.array([a for a, _ in pairs])
    y = np.array([b for _, b in pairs], dtype=float)
    loss = binary_cross_entropy(Tensor(p), y).item()
    assert loss >= 0
    clamped = np.clip(p, BCE_EPS, 1 - BCE_EPS)
    if loss == 0.0:
        assert np.all(np.abs(clamped - y) < 1e-6)


# ---------------------------------------------------------------- backward


def test_backward_sum_gives_ones():
    x = Tensor(np.random.default_rng(14).normal(size=(2, 3, 4)), requires_grad=True)
    backward(x.sum())
    assert np.array_equal(x.grad, np.ones((2, 3, 4)))


def test_backward_square():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    backward((x * x).sum())
    assert x.grad.tolist() == [2.0, 4.0, 6.0]


def test_backward_accumulates_until_zeroed():
    x = Tensor([1.0, 2.0], requires_grad=True)
    backward(x.sum())
    backward((x * 3.0).sum())
    assert x.grad.tolist() == [4.0, 4.0]
    x.zero_grad()
    backward(x.sum())
    assert x.grad.tolist() == [1.0, 1.0]


def test_backward_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(UsageError):
        backward(x * 2.0)


def test_backward_without_grad_inputs():
    with pytest.raises(UsageError):
        backward(Tensor([1.0, 2.0]).sum())


def test_shared_subexpression_visited_once():
    x = Tensor([1.5, -0.5], requires_grad=True)
    y = exp(x)
    loss = (y * y + y).sum()
    tape = build_tape(loss)
    assert len(tape) == len({id(t) for t in tape})
    backward(loss)
    assert np.allclose(x.grad, 2 * np.exp(2 * x.data) + np.exp(x.data))


def test_tape_topological_order():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = a * 2.0
    c = b + a
    d = (c * b).sum()
    tape = build_tape(d)
    pos = {id(t): i for i, t in enumerate(tape)}
    for t in tape:
        for p in t._parents:
            if id(p) in pos:
                assert pos[id(p)] < pos[id(t)]


def test_tape_discarded_after_backward():
    x = Tensor([1.0], requires_grad=True)
    loss = (x * x).sum()
    backward(loss)
    assert loss._parents == ()


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_forward_is_deterministic():
    rng = np.random.default_rng(15)
    x, w, b = rng.normal(size=(2, 6, 6)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    a = conv2d(Tensor(x), Tensor(w), Tensor(b), 1, 1).data
    c = conv2d(Tensor(x), Tensor(w), Tensor(b), 1, 1).data
    assert a.tobytes() == c.tobytes()


def test_grad_shape_matches_data():
    w = Tensor(np.ones((3, 2)), requires_grad=True)
    backward(matmul(Tensor(np.ones((4, 3))), w).sum())
    assert w.grad.shape == w.data.shape


def test_numeric_grad_helper_sanity():
    arr = np.array([0.3, -1.2])
    num = numeric_grad(lambda: float(np.sum(arr**3)), arr)
    assert rel_err(num[0], 3 * 0.09) < 1e-8
