import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saat import tensor as T
from saat.errors import ContractViolationError, InvalidShapeError
from saat.gradcheck import check_gradients
from saat.tensor import ParamStore, Tensor, no_grad
from saat.verify import GRAD_TOL, primitive_cases


# ---------------------------------------------------------------- loop oracles

def conv2d_loop(x, w, b=None, stride=1, padding=0, groups=1):
    N, C, H, W = x.shape
    O, Cg, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    out = np.zeros((N, O, Ho, Wo))
    og = O // groups
    for n in range(N):
        for o in range(O):
            g = o // og
            for i in range(Ho):
                for j in range(Wo):
                    patch = xp[n, g * Cg:(g + 1) * Cg, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, o, i, j] = (patch * w[o]).sum() + (0 if b is None else b[o])
    return out


def dwconv1d_loop(x, w):
    B, C, L = x.shape
    k = w.shape[2]
    p = k // 2
    out = np.zeros_like(x)
    for b in range(B):
        for c in range(C):
            for t in range(L):
                for u in range(k):
                    src = t + u - p
                    if 0 <= src < L:
                        out[b, c, t] += w[c, 0, u] * x[b, c, src]
    return out


@pytest.mark.parametrize("stride,padding,groups", [(1, 1, 1), (2, 1, 1), (1, 0, 2), (1, 1, 4), (2, 2, 2)])
def test_conv2d_matches_loop(rng, stride, padding, groups):
    x = rng.standard_normal((2, 4, 7, 6))
    w = rng.standard_normal((4, 4 // groups, 3, 3))
    b = rng.standard_normal(4)
    got = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, padding, groups).data
    np.testing.assert_allclose(got, conv2d_loop(x, w, b, stride, padding, groups), atol=1e-10)


def test_conv2d_5x5_kernel(rng):
    x, w = rng.standard_normal((1, 2, 8, 8)), rng.standard_normal((3, 2, 5, 5))
    np.testing.assert_allclose(T.conv2d(Tensor(x), Tensor(w), padding=2).data,
                               conv2d_loop(x, w, padding=2), atol=1e-10)


def test_depthwise_conv_equals_per_channel(rng):
    x, w = rng.standard_normal((2, 3, 6, 5)), rng.standard_normal((3, 1, 3, 3))
    got = T.conv2d(Tensor(x), Tensor(w), padding=1, groups=3).data
    for c in range(3):
        ref = conv2d_loop(x[:, c:c + 1], w[c:c + 1], padding=1)
        np.testing.assert_allclose(got[:, c:c + 1], ref, atol=1e-10)


def test_conv2d_shape_errors_name_both_shapes():
    with pytest.raises(InvalidShapeError, match=r"\(1, 3, 4, 4\).*\(2, 4, 3, 3\)"):
        T.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 4, 3, 3))))
    with pytest.raises(InvalidShapeError, match="odd"):
        T.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 3, 2, 2))))


@pytest.mark.parametrize("k", [1, 3, 5, 7, 9])
def test_dwconv1d_matches_loop(rng, k):
    x, w = rng.standard_normal((2, 3, 8)), rng.standard_normal((3, 1, k))
    np.testing.assert_allclose(T.dwconv1d(Tensor(x), Tensor(w)).data, dwconv1d_loop(x, w), atol=1e-10)


def test_dwconv1d_rejects_even_kernel():
    with pytest.raises(InvalidShapeError):
        T.dwconv1d(Tensor(np.zeros((1, 2, 5))), Tensor(np.zeros((2, 1, 4))))


def test_layer_norm_formula(rng):
    x = rng.standard_normal((2, 5, 3, 4))
    g, b = rng.standard_normal(5), rng.standard_normal(5)
    mu = x.mean(1, keepdims=True)
    var = x.var(1, keepdims=True)
    ref = (x - mu) / np.sqrt(var + 1e-5) * g[None, :, None, None] + b[None, :, None, None]
    np.testing.assert_allclose(T.layer_norm(Tensor(x), Tensor(g), Tensor(b)).data, ref, atol=1e-10)
    tok = x.transpose(0, 2, 3, 1)
    np.testing.assert_allclose(T.layer_norm(Tensor(tok), Tensor(g), Tensor(b), axis=-1).data,
                               ref.transpose(0, 2, 3, 1), atol=1e-10)


def test_group_norm_formula(rng):
    x = rng.standard_normal((2, 8, 5))
    xg = x.reshape(2, 4, 2 * 5)
    ref = ((xg - xg.mean(-1, keepdims=True)) / np.sqrt(xg.var(-1, keepdims=True) + 1e-5)).reshape(x.shape)
    np.testing.assert_allclose(T.group_norm(Tensor(x), 4).data, ref, atol=1e-10)


def test_group_norm_one_group_per_channel_is_instance_norm(rng):
    x = rng.standard_normal((1, 3, 7))
    ref = (x - x.mean(-1, keepdims=True)) / np.sqrt(x.var(-1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(T.group_norm(Tensor(x), 3).data, ref, atol=1e-10)


def test_pixel_shuffle_layout():
    # channel c*r*r + i*r + j lands at output (c, h*r + i, w*r + j)
    r, C, H, W = 2, 2, 2, 3
    x = np.arange(C * r * r * H * W, dtype=np.float64).reshape(1, C * r * r, H, W)
    y = T.pixel_shuffle(Tensor(x), r).data
    for c in range(C):
        for i in range(r):
            for j in range(r):
                for h in range(H):
                    for w in range(W):
                        assert y[0, c, h * r + i, w * r + j] == x[0, c * r * r + i * r + j, h, w]


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_pixel_shuffle_roundtrip(r, C, H, W):
    x = np.random.default_rng(r * 100 + C * 10 + H).standard_normal((1, C * r * r, H, W))
    y = T.pixel_unshuffle(T.pixel_shuffle(Tensor(x), r), r)
    assert np.array_equal(y.data, x)


def test_softmax_stable_for_large_inputs(rng):
    x = rng.standard_normal((4, 9)) * 1e4
    y = T.softmax(Tensor(x)).data
    assert np.isfinite(y).all()
    np.testing.assert_allclose(y.sum(-1), 1.0, atol=1e-6)


def test_gelu_tanh_form():
    x = np.linspace(-4, 4, 17)
    ref = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x ** 3)))
    np.testing.assert_allclose(T.gelu(Tensor(x)).data, ref, atol=1e-12)


def test_unfold2d_windows(rng):
    x = rng.standard_normal((1, 2, 6, 6))
    y = T.unfold2d(Tensor(x), 4, 2).data
    assert y.shape == (1, 2, 2, 2, 4, 4)
    for i in range(2):
        for j in range(2):
            assert np.array_equal(y[:, :, i, j], x[:, :, 2 * i:2 * i + 4, 2 * j:2 * j + 4])


def test_reflect_pad_matches_numpy(rng):
    x = rng.standard_normal((1, 1, 5, 4))
    got = T.pad(Tensor(x), [(0, 3), (2, 1)], mode="reflect").data
    assert np.array_equal(got, np.pad(x, ((0, 0), (0, 0), (0, 3), (2, 1)), mode="reflect"))


# ---------------------------------------------------------------- tape

def test_linear_case_gradient_is_exact(rng):
    x = rng.standard_normal((3, 4))
    w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    (w * Tensor(x)).sum().backward()
    assert np.array_equal(w.grad, x)


def test_unused_parameter_gets_zero_grad(rng):
    used = Tensor(rng.standard_normal(3), requires_grad=True)
    unused = Tensor(rng.standard_normal(3), requires_grad=True)
    store = ParamStore([("used", used), ("unused", unused)])
    (used * used).sum().backward()
    assert np.array_equal(store.grad("unused"), np.zeros(3))


def test_backward_on_non_scalar_raises():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractViolationError):
        (x * x).backward()


def test_gradients_accumulate_over_reuse(rng):
    a = Tensor(rng.standard_normal(4), requires_grad=True)
    (a * a + a).sum().backward()
    np.testing.assert_allclose(a.grad, 2 * a.data + 1)


def test_no_grad_builds_no_tape():
    a = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = a * a
    assert not y.requires_grad and not y._parents


def test_param_store_rejects_duplicates():
    s = ParamStore([("a", Tensor(np.zeros(1)))])
    with pytest.raises(ValueError):
        s.add("a", Tensor(np.zeros(1)))


@pytest.mark.parametrize("case", primitive_cases(), ids=lambda c: c[0])
def test_primitive_gradcheck_f64(case):
    name, fn, arrays = case
    res = check_gradients(fn, arrays, probes=20, name=name)
    assert res.probes >= 20
    assert res.ok(GRAD_TOL), res


def test_gradcheck_float32_tolerance(rng):
    # the check itself promotes to float64; the float32 engine path is compared loosely
    x = rng.standard_normal((1, 2, 5, 5)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    xt, wt = Tensor(x, requires_grad=True), Tensor(w, requires_grad=True)
    T.conv2d(xt, wt, padding=1).sum().backward()
    ref_w = np.array([[[[conv2d_loop(np.pad(x.astype(np.float64), ((0, 0), (0, 0), (1, 1), (1, 1)))
                                     [:, c:c + 1, i:i + 5, j:j + 5], np.ones((1, 1, 5, 5))).sum()
                         for j in range(3)] for i in range(3)] for c in range(2)]] * 3)
    np.testing.assert_allclose(wt.grad, ref_w, rtol=1e-3, atol=1e-3)


def test_injected_fault_is_detected():
    name, fn, arrays = next(c for c in primitive_cases() if c[0] == "mul")
    T.inject_fault("mul")
    try:
        res = check_gradients(fn, arrays, name=name)
    finally:
        T.clear_faults()
    assert not res.ok(GRAD_TOL)
