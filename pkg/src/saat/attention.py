"""Window multi-head self-attention and overlapping cross-attention."""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import InvalidConfigError, InvalidShapeError
from .nn import Linear, Module, param
from .tensor import Tensor
from .windowing import WindowGrid, pad_to_multiple, relative_position_index, window_partition, window_reverse


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, N, C = x.shape
    return x.reshape(B, N, heads, C // heads).permute(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    B, h, N, d = x.shape
    return x.permute(0, 2, 1, 3).reshape(B, N, h * d)


def _attend(q, k, v, scale, bias: Tensor, mask: np.ndarray | None):
    """softmax(q k^T * scale + bias + mask) v over (B', heads, Nq, d) inputs."""
    logits = T.matmul(q * scale, k.permute(0, 1, 3, 2)) + bias
    if mask is not None:
        B_, h, Nq, Nk = logits.shape
        nW = mask.shape[0]
        m = Tensor(mask.astype(logits.dtype, copy=False)[None, :, None])
        logits = (logits.reshape(B_ // nW, nW, h, Nq, Nk) + m).reshape(B_, h, Nq, Nk)
    attn = T.softmax(logits, axis=-1)
    return T.matmul(attn, v), attn


def _gather_bias(table: Tensor, index: np.ndarray) -> Tensor:
    nq, nk = index.shape
    return T.take(table, index.reshape(-1), axis=0).reshape(nq, nk, -1).permute(2, 0, 1)


class WindowAttention(Module):
    """Parameters of (shifted) window self-attention."""

    def __init__(self, dim: int, heads: int, window_size: int, rng, dtype=np.float32):
        if dim % heads:
            raise InvalidConfigError(f"channels {dim} not divisible by heads {heads}")
        self.qkv = Linear(dim, 3 * dim, rng, dtype)
        self.proj = Linear(dim, dim, rng, dtype)
        # zero-initialized so structural degenerations stay exact
        self.rel_bias = param(np.zeros(((2 * window_size - 1) ** 2, heads)), dtype)
        self.heads = heads
        self.dim = dim
        self.window_size = window_size
        self.scale = 1.0 / math.sqrt(dim // heads)
        self.rel_index = relative_position_index(window_size)


def wmsa_forward(x: Tensor, p: WindowAttention, mask: np.ndarray | None = None,
                 return_attn: bool = False):
    """Self-attention inside each window of x: (B * nW) x G^2 x C."""
    B_, N, C = x.shape
    if C % p.heads:
        raise InvalidConfigError(f"channels {C} not divisible by heads {p.heads}")
    if N != p.window_size ** 2:
        raise InvalidShapeError(f"expected {p.window_size ** 2} tokens per window, got {N}")
    if mask is not None and (B_ % mask.shape[0] or mask.shape[1:] != (N, N)):
        raise InvalidShapeError(f"mask {mask.shape} does not fit windows {x.shape}")
    qkv = p.qkv(x).reshape(B_, N, 3, p.heads, C // p.heads).permute(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    out, attn = _attend(q, k, v, p.scale, _gather_bias(p.rel_bias, p.rel_index), mask)
    out = p.proj(_merge_heads(out))
    return (out, attn) if return_attn else out


def overlap_size(G: int, mu: float) -> int:
    g0 = (1.0 + mu) * G
    if abs(g0 - round(g0)) > 1e-9:
        raise InvalidConfigError(f"overlap window (1 + {mu}) * {G} = {g0} is not an integer")
    return int(round(g0))


def oca_relative_index(G: int, G0: int) -> np.ndarray:
    """G^2 x G0^2 bias index for query-minus-key displacement; equals the
    window-attention table when G0 == G."""
    before = (G0 - G) // 2
    M = G + G0 - 1
    off = G0 - 1 - before
    qy, qx = np.divmod(np.arange(G * G), G)
    ky, kx = np.divmod(np.arange(G0 * G0), G0)
    dy = qy[:, None] + before - ky[None, :] + off
    dx = qx[:, None] + before - kx[None, :] + off
    return dy * M + dx


class OverlapCrossAttention(Module):
    def __init__(self, dim: int, heads: int, window_size: int, mu: float, rng, dtype=np.float32):
        if dim % heads:
            raise InvalidConfigError(f"channels {dim} not divisible by heads {heads}")
        self.overlap = overlap_size(window_size, mu)
        self.q = Linear(dim, dim, rng, dtype)
        self.kv = Linear(dim, 2 * dim, rng, dtype)
        self.proj = Linear(dim, dim, rng, dtype)
        self.rel_bias = param(np.zeros(((window_size + self.overlap - 1) ** 2, heads)), dtype)
        self.heads = heads
        self.dim = dim
        self.window_size = window_size
        self.mu = mu
        self.scale = 1.0 / math.sqrt(dim // heads)
        self.rel_index = oca_relative_index(window_size, self.overlap)


def oca_forward(x: Tensor, p: OverlapCrossAttention, return_attn: bool = False):
    """Queries from G x G windows, keys/values from overlapping G0 x G0 windows
    taken at stride G from the zero-padded projected map."""
    N, C, H, W = x.shape
    G, G0 = p.window_size, p.overlap
    grid = window_partition(x, G)
    q = _split_heads(p.q(grid.windows), p.heads)

    xp, _, _ = pad_to_multiple(x, G)
    Hp, Wp = xp.shape[2:]
    nh, nw = Hp // G, Wp // G
    kv = p.kv(xp.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
    before = (G0 - G) // 2
    after = G0 - G - before
    kv = T.pad(kv, [(before, after), (before, after)])
    kv = T.unfold2d(kv, G0, G)  # N x 2C x nh x nw x G0 x G0
    kv = kv.permute(0, 2, 3, 4, 5, 1).reshape(N * nh * nw, G0 * G0, 2 * C)
    k = _split_heads(kv[:, :, :C], p.heads)
    v = _split_heads(kv[:, :, C:], p.heads)

    out, attn = _attend(q, k, v, p.scale, _gather_bias(p.rel_bias, p.rel_index), None)
    out = p.proj(_merge_heads(out))
    y = window_reverse(WindowGrid(grid.windows, G, H, W, grid.pad_h, grid.pad_w), out)
    return (y, attn) if return_attn else y
