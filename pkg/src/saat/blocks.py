"""Composite blocks: SMSAB, ECAB, MLP/ConvFFN, SWSAB, CWSAB, OCAB and the two group types."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from . import tensor as T
from .attention import OverlapCrossAttention, WindowAttention, oca_forward, wmsa_forward
from .errors import InvalidConfigError
from .nn import Conv2d, LayerNorm, Linear, Module, param, trunc_normal
from .tensor import Tensor
from .windowing import (build_attn_mask, cyclic_shift, inverse_cyclic_shift, pad_to_multiple,
                        window_partition, window_reverse)


def eca_kernel_size(C: int, gamma: int = 2, b: int = 1) -> int:
    """Odd gate-kernel size: floor((log2 C + b) / gamma), bumped by one when even."""
    k = math.floor((math.log2(C) + b) / gamma)
    if k % 2 == 0:
        k += 1
    return max(k, 1)


# ---------------------------------------------------------------- SMSAB

class SMSA(Module):
    def __init__(self, dim: int, K: int, kernels, rng, dtype=np.float32):
        kernels = list(kernels)
        if dim % K:
            raise InvalidConfigError(f"channels {dim} not divisible into K={K} groups")
        if len(kernels) != K or any(k % 2 == 0 for k in kernels):
            raise InvalidConfigError(f"need K={K} odd kernel sizes, got {kernels}")
        cg = dim // K
        # one weight set per sub-feature group, shared by the H and W branches
        self.convs = [param(trunc_normal(rng, (cg, 1, k), dtype=dtype), dtype) for k in kernels]
        self.norm_h_weight = param(np.ones(dim), dtype)
        self.norm_h_bias = param(np.zeros(dim), dtype)
        self.norm_w_weight = param(np.ones(dim), dtype)
        self.norm_w_bias = param(np.zeros(dim), dtype)
        self.K = K
        self.dim = dim

    def named_parameters(self, prefix: str = ""):
        for i, w in enumerate(self.convs):
            yield f"{prefix}convs.{i}.weight", w
        yield from super().named_parameters(prefix)


def _smsa_branch(seq: Tensor, p: SMSA, gamma: Tensor, beta: Tensor) -> Tensor:
    cg = p.dim // p.K
    parts = [T.dwconv1d(seq[:, i * cg:(i + 1) * cg], w) for i, w in enumerate(p.convs)]
    y = T.group_norm(T.concat(parts, axis=1), p.K)
    y = y * gamma.reshape(1, -1, 1) + beta.reshape(1, -1, 1)
    return T.sigmoid(y)


def smsa_forward(x: Tensor, p: SMSA, return_maps: bool = False):
    N, C, H, W = x.shape
    if C % p.K:
        raise InvalidConfigError(f"channels {C} not divisible into K={p.K} groups")
    attn_h = _smsa_branch(T.avg_pool_axis(x, 3), p, p.norm_h_weight, p.norm_h_bias)
    attn_w = _smsa_branch(T.avg_pool_axis(x, 2), p, p.norm_w_weight, p.norm_w_bias)
    attn_h = attn_h.reshape(N, C, H, 1)
    attn_w = attn_w.reshape(N, C, 1, W)
    out = attn_h * attn_w * x
    return (out, attn_h, attn_w) if return_maps else out


# ---------------------------------------------------------------- ECAB

class ECAB(Module):
    def __init__(self, dim: int, rng, dtype=np.float32, reduction: int = 4, additive: bool = False):
        if dim % reduction:
            raise InvalidConfigError(f"channels {dim} not divisible by ECAB reduction {reduction}")
        self.conv1 = Conv2d(dim, dim // reduction, 3, rng, dtype)
        self.conv2 = Conv2d(dim // reduction, dim, 3, rng, dtype)
        self.k = eca_kernel_size(dim)
        self.gate = param(trunc_normal(rng, (1, 1, self.k), dtype=dtype), dtype)
        self.additive = additive


def ecab_forward(x: Tensor, p: ECAB, return_gate: bool = False):
    f = p.conv2(T.gelu(p.conv1(x)))
    N, C = f.shape[:2]
    desc = T.global_avg_pool(f).reshape(N, 1, C)
    g = T.sigmoid(T.dwconv1d(desc, p.gate)).reshape(N, C, 1, 1)
    out = f + g if p.additive else f * g
    return (out, g) if return_gate else out


# ---------------------------------------------------------------- MLP / ConvFFN

class MLP(Module):
    def __init__(self, dim: int, ratio: int, rng, dtype=np.float32, conv_ffn: bool = True):
        hidden = dim * ratio
        self.fc1 = Linear(dim, hidden, rng, dtype)
        self.dwconv = Conv2d(hidden, hidden, 3, rng, dtype, groups=hidden) if conv_ffn else None
        self.fc2 = Linear(hidden, dim, rng, dtype)


def mlp_forward(x: Tensor, p: MLP) -> Tensor:
    """x: N x H x W x C token grid."""
    h = T.gelu(p.fc1(x))
    if p.dwconv is not None:
        h = h + p.dwconv(h.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)
    return p.fc2(h)


def _mlp_nchw(x: Tensor, p: MLP) -> Tensor:
    return mlp_forward(x.permute(0, 2, 3, 1), p).permute(0, 3, 1, 2)


# ---------------------------------------------------------------- window blocks

@lru_cache(maxsize=64)
def _cached_mask(H: int, W: int, G: int, s: int) -> np.ndarray:
    m = build_attn_mask(H, W, G, s)
    m.setflags(write=False)
    return m


def shifted_window_attention(x: Tensor, attn: WindowAttention, shift: int) -> Tensor:
    """Pad -> roll -> partition -> W-MSA -> reverse -> unroll -> crop.

    The roll and the mask both use ``shift mod G``; a roll by a whole window
    only permutes windows, so this is exact for any literal shift.
    """
    G = attn.window_size
    s = shift % G
    H, W = x.shape[2:]
    xp, _, _ = pad_to_multiple(x, G)
    Hp, Wp = xp.shape[2:]
    grid = window_partition(cyclic_shift(xp, s), G, shift=s)
    mask = _cached_mask(Hp, Wp, G, s) if s else None
    y = inverse_cyclic_shift(window_reverse(grid, wmsa_forward(grid.windows, attn, mask)), s)
    if (Hp, Wp) != (H, W):
        y = y[:, :, :H, :W]
    return y


class SWSAB(Module):
    def __init__(self, dim, heads, window_size, rng, dtype=np.float32, *, alpha=0.01, K=4,
                 smsa_kernels=(3, 5, 7, 9), mlp_ratio=2, conv_ffn=True):
        self.norm1 = LayerNorm(dim, dtype)
        self.attn = WindowAttention(dim, heads, window_size, rng, dtype)
        self.smsa = SMSA(dim, K, smsa_kernels, rng, dtype)
        self.norm2 = LayerNorm(dim, dtype)
        self.mlp = MLP(dim, mlp_ratio, rng, dtype, conv_ffn)
        if alpha < 0:
            raise InvalidConfigError(f"alpha must be >= 0, got {alpha}")
        self.alpha = alpha

    def forward(self, x, shift=0):
        return swsab_forward(x, self, shift)


def swsab_forward(x: Tensor, p: SWSAB, shift: int = 0, use_branch: bool = True) -> Tensor:
    h = p.norm1(x)
    f = shifted_window_attention(h, p.attn, shift)
    if use_branch:
        f = f + smsa_forward(h, p.smsa) * p.alpha
    f = f + x
    return _mlp_nchw(p.norm2(f), p.mlp) + f


class CWSAB(Module):
    def __init__(self, dim, heads, window_size, rng, dtype=np.float32, *, beta=0.01,
                 eca_reduction=4, eca_additive=False, mlp_ratio=2, conv_ffn=True):
        self.norm1 = LayerNorm(dim, dtype)
        self.attn = WindowAttention(dim, heads, window_size, rng, dtype)
        self.norm2 = LayerNorm(dim, dtype)
        self.eca = ECAB(dim, rng, dtype, eca_reduction, eca_additive)
        self.norm3 = LayerNorm(dim, dtype)
        self.mlp = MLP(dim, mlp_ratio, rng, dtype, conv_ffn)
        if beta < 0:
            raise InvalidConfigError(f"beta must be >= 0, got {beta}")
        self.beta = beta

    def forward(self, x, shift=0):
        return cwsab_forward(x, self, shift)


def cwsab_forward(x: Tensor, p: CWSAB, shift: int = 0, use_branch: bool = True) -> Tensor:
    f = shifted_window_attention(p.norm1(x), p.attn, shift)
    if use_branch:
        f = f + ecab_forward(p.norm2(x), p.eca) * p.beta
    f = f + x
    return _mlp_nchw(p.norm3(f), p.mlp) + f


class OCAB(Module):
    def __init__(self, dim, heads, window_size, mu, rng, dtype=np.float32, *, mlp_ratio=2,
                 conv_ffn=True):
        self.norm1 = LayerNorm(dim, dtype)
        self.attn = OverlapCrossAttention(dim, heads, window_size, mu, rng, dtype)
        self.norm2 = LayerNorm(dim, dtype)
        self.mlp = MLP(dim, mlp_ratio, rng, dtype, conv_ffn)

    def forward(self, x):
        return ocab_forward(x, self)


def ocab_forward(x: Tensor, p: OCAB) -> Tensor:
    x = oca_forward(p.norm1(x), p.attn) + x
    return _mlp_nchw(p.norm2(x), p.mlp) + x


# ---------------------------------------------------------------- groups

SWSAG, CWSAG = "SWSAG", "CWSAG"


class Group(Module):
    """Blocks with per-block shifts, then OCAB, then a 3x3 conv, plus the group residual."""

    def __init__(self, kind: str, dim: int, heads: int, window_size: int, shifts, rng,
                 dtype=np.float32, *, alpha=0.01, beta=0.01, mu=0.5, K=4,
                 smsa_kernels=(3, 5, 7, 9), mlp_ratio=2, conv_ffn=True, eca_reduction=4,
                 eca_additive=False):
        if kind not in (SWSAG, CWSAG):
            raise InvalidConfigError(f"unknown group kind {kind!r}")
        self.kind = kind
        self.shifts = tuple(int(s) for s in shifts)
        if kind == SWSAG:
            self.blocks = [SWSAB(dim, heads, window_size, rng, dtype, alpha=alpha, K=K,
                                 smsa_kernels=smsa_kernels, mlp_ratio=mlp_ratio,
                                 conv_ffn=conv_ffn) for _ in self.shifts]
        else:
            self.blocks = [CWSAB(dim, heads, window_size, rng, dtype, beta=beta,
                                 eca_reduction=eca_reduction, eca_additive=eca_additive,
                                 mlp_ratio=mlp_ratio, conv_ffn=conv_ffn) for _ in self.shifts]
        self.ocab = OCAB(dim, heads, window_size, mu, rng, dtype, mlp_ratio=mlp_ratio,
                         conv_ffn=conv_ffn)
        self.conv = Conv2d(dim, dim, 3, rng, dtype)

    def forward(self, x):
        return group_forward(x, self)


def group_forward(x: Tensor, g: Group, kind: str | None = None) -> Tensor:
    if kind is not None and kind != g.kind:
        raise InvalidConfigError(f"group is {g.kind}, asked for {kind}")
    h = x
    for blk, s in zip(g.blocks, g.shifts):
        h = blk(h, s)
    return g.conv(ocab_forward(h, g.ocab)) + x
