import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saat.blocks import (CWSAB, CWSAG, ECAB, MLP, OCAB, SMSA, SWSAB, SWSAG, Group, cwsab_forward,
                         eca_kernel_size, ecab_forward, group_forward, mlp_forward, ocab_forward,
                         smsa_forward, swsab_forward)
from saat.errors import InvalidConfigError
from saat.gradcheck import check_gradients
from saat import tensor as T
from saat.tensor import Tensor
from saat.verify import GRAD_TOL, block_cases, randomize


@pytest.mark.parametrize("C,k", [(2, 1), (16, 3), (64, 3), (180, 5), (256, 5)])
def test_eca_kernel_table(C, k):
    assert eca_kernel_size(C) == k


def test_eca_kernel_odd_and_monotone():
    ks = [eca_kernel_size(C) for C in range(1, 4097)]
    assert all(k >= 1 and k % 2 == 1 for k in ks)
    assert all(b >= a for a, b in zip(ks, ks[1:]))


def test_smsa_zero_kernels_quarter_input(rng):
    p = SMSA(16, 4, (3, 5, 7, 9), rng, np.float64)
    for w in p.convs:
        w.data[:] = 0
    x = rng.standard_normal((2, 16, 9, 12))
    np.testing.assert_allclose(smsa_forward(Tensor(x), p).data, 0.25 * x, atol=1e-12)


def test_smsa_maps_are_separable_gates(rng):
    p = SMSA(8, 4, (3, 5, 7, 9), rng, np.float64)
    randomize(p, rng)
    x = rng.standard_normal((1, 8, 6, 5))
    out, ah, aw = smsa_forward(Tensor(x), p, return_maps=True)
    assert ah.shape == (1, 8, 6, 1) and aw.shape == (1, 8, 1, 5)
    assert ((ah.data > 0) & (ah.data < 1)).all()
    np.testing.assert_allclose(out.data, ah.data * aw.data * x, atol=1e-12)


def test_smsa_kernels_shared_between_axes(rng):
    # on a transposed square input with symmetric GN affine, the two gates swap
    p = SMSA(8, 4, (3, 5, 7, 9), rng, np.float64)
    randomize(p, rng)
    p.norm_w_weight.data = p.norm_h_weight.data.copy()
    p.norm_w_bias.data = p.norm_h_bias.data.copy()
    x = rng.standard_normal((1, 8, 7, 7))
    _, ah, aw = smsa_forward(Tensor(x), p, return_maps=True)
    _, ah_t, aw_t = smsa_forward(Tensor(x.transpose(0, 1, 3, 2).copy()), p, return_maps=True)
    np.testing.assert_allclose(ah.data[..., 0], aw_t.data[:, :, 0], atol=1e-12)


def test_smsa_rejects_bad_groups(rng):
    with pytest.raises(InvalidConfigError):
        SMSA(10, 4, (3, 5, 7, 9), rng)
    with pytest.raises(InvalidConfigError):
        SMSA(8, 4, (3, 4, 7, 9), rng)


def test_ecab_zero_gate_halves_features(rng):
    p = ECAB(16, rng, np.float64)
    randomize(p, rng)
    p.gate.data[:] = 0
    x = Tensor(rng.standard_normal((1, 16, 5, 5)))
    out, g = ecab_forward(x, p, return_gate=True)
    f = p.conv2(T.gelu(p.conv1(x))).data
    np.testing.assert_allclose(g.data, 0.5)
    np.testing.assert_allclose(out.data, 0.5 * f, atol=1e-12)


def test_ecab_additive_switch(rng):
    p = ECAB(16, rng, np.float64, additive=True)
    randomize(p, rng)
    x = Tensor(rng.standard_normal((1, 16, 4, 4)))
    out, g = ecab_forward(x, p, return_gate=True)
    p.additive = False
    mult = ecab_forward(x, p).data
    f = mult / g.data
    np.testing.assert_allclose(out.data, f + g.data, atol=1e-10)


def test_ecab_gate_kernel_matches_table(rng):
    assert ECAB(64, rng).gate.shape == (1, 1, 3)
    assert ECAB(180, rng).gate.shape == (1, 1, 5)


def test_mlp_zero_second_linear(rng):
    p = MLP(8, 2, rng, np.float64)
    randomize(p, rng)
    p.fc2.weight.data[:] = 0
    p.fc2.bias.data[:] = 0
    assert not mlp_forward(Tensor(rng.standard_normal((1, 3, 3, 8))), p).data.any()


def test_convffn_zero_dw_equals_plain(rng):
    conv = MLP(8, 2, rng, np.float64, conv_ffn=True)
    randomize(conv, rng)
    conv.dwconv.weight.data[:] = 0
    conv.dwconv.bias.data[:] = 0
    plain = MLP(8, 2, rng, np.float64, conv_ffn=False)
    plain.fc1, plain.fc2 = conv.fc1, conv.fc2
    x = Tensor(rng.standard_normal((2, 4, 5, 8)))
    assert np.array_equal(mlp_forward(x, conv).data, mlp_forward(x, plain).data)


def _blocks(rng, C=8, G=4, **kw):
    sw = SWSAB(C, 2, G, rng, np.float64, **{k: v for k, v in kw.items() if k == "alpha"})
    cw = CWSAB(C, 2, G, rng, np.float64, **{k: v for k, v in kw.items() if k == "beta"})
    randomize(sw, rng)
    randomize(cw, rng)
    return sw, cw


@pytest.mark.parametrize("shift", [0, 2, 4, 6])
def test_alpha_beta_zero_are_plain_blocks(rng, shift):
    sw, cw = _blocks(rng, alpha=0.0, beta=0.0)
    x = Tensor(rng.standard_normal((1, 8, 8, 8)))
    assert np.array_equal(swsab_forward(x, sw, shift).data, swsab_forward(x, sw, shift, use_branch=False).data)
    assert np.array_equal(cwsab_forward(x, cw, shift).data, cwsab_forward(x, cw, shift, use_branch=False).data)
    # the two block types coincide once their plain parts share parameters
    cw.norm1, cw.attn, cw.norm3, cw.mlp = sw.norm1, sw.attn, sw.norm2, sw.mlp
    assert np.array_equal(cwsab_forward(x, cw, shift).data, swsab_forward(x, sw, shift).data)


def test_nonzero_alpha_changes_output(rng):
    sw, _ = _blocks(rng, alpha=0.5)
    x = Tensor(rng.standard_normal((1, 8, 8, 8)))
    a = swsab_forward(x, sw, 2).data
    sw.alpha = 0.0
    b = swsab_forward(x, sw, 2).data
    assert np.abs(a - b).max() > 1e-6


@pytest.mark.parametrize("shift", [0, 4, 8, 12])
def test_shift_modulo_window(rng, shift):
    sw, cw = _blocks(rng)
    x = Tensor(rng.standard_normal((1, 8, 8, 12)))
    np.testing.assert_array_equal(swsab_forward(x, sw, shift).data, swsab_forward(x, sw, shift % 4).data)
    np.testing.assert_array_equal(cwsab_forward(x, cw, shift).data, cwsab_forward(x, cw, shift % 4).data)


@given(st.integers(3, 13), st.integers(3, 13), st.sampled_from([0, 1, 2, 3]))
@settings(max_examples=15, deadline=None)
def test_blocks_preserve_shape(H, W, shift):
    rng = np.random.default_rng(H * 17 + W)
    sw, cw = _blocks(rng)
    ocab = OCAB(8, 2, 4, 0.5, rng, np.float64)
    x = Tensor(rng.standard_normal((1, 8, H, W)))
    for y in (swsab_forward(x, sw, shift), cwsab_forward(x, cw, shift), ocab_forward(x, ocab),
              smsa_forward(x, sw.smsa), ecab_forward(x, cw.eca)):
        assert y.shape == x.shape


def test_group_order_and_residual(rng):
    g = Group(SWSAG, 8, 2, 4, (0, 2), rng, np.float64)
    randomize(g, rng)
    x = Tensor(rng.standard_normal((1, 8, 8, 8)))
    h = swsab_forward(swsab_forward(x, g.blocks[0], 0), g.blocks[1], 2)
    ref = g.conv(ocab_forward(h, g.ocab)).data + x.data
    assert np.array_equal(group_forward(x, g, SWSAG).data, ref)
    with pytest.raises(InvalidConfigError):
        group_forward(x, g, CWSAG)


def test_group_zero_conv_is_identity(rng):
    g = Group(CWSAG, 8, 2, 4, (0, 2), rng, np.float64)
    randomize(g, rng)
    g.conv.weight.data[:] = 0
    g.conv.bias.data[:] = 0
    x = Tensor(rng.standard_normal((1, 8, 8, 8)))
    assert np.array_equal(group_forward(x, g).data, x.data)


def test_group_rejects_unknown_kind(rng):
    with pytest.raises(InvalidConfigError):
        Group("XYZ", 8, 2, 4, (0,), rng)


@pytest.mark.parametrize("case", [c for c in block_cases() if c[0] not in ("wmsa", "shifted_wmsa", "oca")],
                         ids=lambda c: c[0])
def test_block_gradcheck(case):
    name, fn, arrays, tensors = case
    res = check_gradients(fn, arrays, probes=20, name=name, tensors=tensors)
    assert res.probes >= 20
    assert res.ok(GRAD_TOL), res
