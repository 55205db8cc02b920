"""Dense tensors with a define-by-run reverse-mode tape.

Every differentiable op builds its output with :func:`_node`, attaching the
parents and a closure that maps the output gradient to one gradient per
parent. ``Tensor.backward`` walks the tape in reverse topological order and
accumulates into ``.grad`` of leaf tensors that require gradients.

Layout is N x C x H x W throughout. Only float32 (default) and float64
(verification) data are supported.
"""
from __future__ import annotations

import threading
from collections.abc import Iterable, Sequence

import numpy as np

from .errors import ContractViolationError, InvalidConfigError, InvalidShapeError

DEFAULT_DTYPE = np.float32
_FLOATS = (np.dtype(np.float32), np.dtype(np.float64))


class _GradMode(threading.local):
    enabled = True


_grad_mode = _GradMode()

# Verification hook: ops listed here get their backward rule negated.
_FAULTS: set[str] = set()


def inject_fault(op: str) -> None:
    _FAULTS.add(op)


def clear_faults() -> None:
    _FAULTS.clear()


class no_grad:
    """Disable tape recording for the current thread."""

    def __enter__(self):
        self._prev = _grad_mode.enabled
        _grad_mode.enabled = False
        return self

    def __exit__(self, *exc):
        _grad_mode.enabled = self._prev
        return False


def grad_enabled() -> bool:
    return _grad_mode.enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOATS:
            arr = arr.astype(DEFAULT_DTYPE)
        if arr.size == 0:
            raise InvalidShapeError(f"tensor extents must all be >= 1, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Reverse sweep from a scalar loss. ``seed`` supplies dL/d(self) for a
        non-scalar output whose downstream loss lives outside the tape."""
        if seed is None and self.data.size != 1:
            raise ContractViolationError(
                f"backward() needs a scalar loss, got shape {self.shape}"
            )
        if seed is not None and np.shape(seed) != self.shape:
            raise ContractViolationError(f"seed gradient {np.shape(seed)} does not match output {self.shape}")
        if not self.requires_grad:
            raise ContractViolationError("loss is not connected to any tensor requiring grad")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=self.dtype)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                g = np.asarray(g, dtype=node.dtype)
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            pgrads = node._backward(g)
            if node.op in _FAULTS:
                pgrads = tuple(None if pg is None else -pg for pg in pgrads)
            for p, pg in zip(node._parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                k = id(p)
                grads[k] = pg if k not in grads else grads[k] + pg

        # the tape is single use
        for node in topo:
            if node._backward is not None:
                node._parents = ()
                node._backward = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _grad_mode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, a)
    b = as_tensor(b)
    return as_tensor(a, b), b


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data * b.data, (a, b), bw, "mul")


def abs_(x: Tensor) -> Tensor:
    def bw(g):
        return (g * np.sign(x.data),)

    return _node(np.abs(x.data), (x,), bw, "abs")


def sigmoid(x: Tensor) -> Tensor:
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype)

    def bw(g):
        return (g * y * (1.0 - y),)

    return _node(y, (x,), bw, "sigmoid")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    xd = x.data
    t = np.tanh(_GELU_C * (xd + 0.044715 * xd**3))
    y = 0.5 * xd * (1.0 + t)

    def bw(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * dt),)

    return _node(y.astype(x.dtype), (x,), bw, "gelu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _node(y, (x,), bw, "softmax")


# ---------------------------------------------------------------- shape ops

def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape

    def bw(g):
        return (g.reshape(src),)

    return _node(x.data.reshape(shape), (x,), bw, "reshape")


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return _node(np.ascontiguousarray(x.data.transpose(axes)), (x,), bw, "permute")


def getitem(x: Tensor, idx) -> Tensor:
    """Basic slicing only; gathers with index arrays go through :func:`take`."""
    out = np.array(x.data[idx])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return _node(out, (x,), bw, "getitem")


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % x.ndim
    out = np.take(x.data, indices, axis=axis)

    def bw(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        gm = np.moveaxis(g, tuple(range(axis, axis + indices.ndim)), tuple(range(indices.ndim)))
        np.add.at(moved, indices, gm)
        return (gx,)

    return _node(out, (x,), bw, "take")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def roll(x: Tensor, shifts, axes) -> Tensor:
    shifts, axes = tuple(shifts), tuple(axes)

    def bw(g):
        return (np.roll(g, tuple(-s for s in shifts), axes),)

    return _node(np.roll(x.data, shifts, axes), (x,), bw, "roll")


def _reflect_index(n: int, before: int, after: int) -> np.ndarray:
    pos = np.arange(-before, n + after)
    if n == 1:
        return np.zeros_like(pos)
    period = 2 * (n - 1)
    pos = np.mod(pos, period)
    return np.where(pos >= n, period - pos, pos)


def pad(x: Tensor, widths: Sequence[tuple[int, int]], mode: str = "constant") -> Tensor:
    """Pad trailing axes. ``widths`` lists (before, after) for the last len(widths) axes."""
    widths = [(0, 0)] * (x.ndim - len(widths)) + [tuple(w) for w in widths]
    if all(w == (0, 0) for w in widths):
        return x
    if mode == "reflect":
        out = x
        for ax, (b, a) in enumerate(widths):
            if b or a:
                out = take(out, _reflect_index(out.shape[ax], b, a), axis=ax)
        return out
    if mode != "constant":
        raise InvalidConfigError(f"unknown pad mode {mode!r}")
    crop = tuple(slice(b, b + n) for (b, _), n in zip(widths, x.shape))

    def bw(g):
        return (np.ascontiguousarray(g[crop]),)

    return _node(np.pad(x.data, widths), (x,), bw, "pad")


# ---------------------------------------------------------------- reductions

def _axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axes(axis, x.ndim)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return _node(np.asarray(x.data.sum(axis=axes, keepdims=keepdims)), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, x.shape),)

    return _node(np.asarray(x.data.mean(axis=axes, keepdims=keepdims)), (x,), bw, "mean")


def avg_pool_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    return mean(x, axis, keepdims)


def global_avg_pool(x: Tensor) -> Tensor:
    """N x C x H x W -> N x C x 1 x 1."""
    return mean(x, (2, 3), keepdims=True)


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data @ b.data, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: x @ w.T + b, with w of shape (out, in)."""
    if x.shape[-1] != w.shape[1]:
        raise InvalidShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ w.data if x.requires_grad else None
        gw = g2.T @ x.data.reshape(-1, x.shape[-1]) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _node(out, parents, bw, "linear")


# ---------------------------------------------------------------- convolution

def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, groups: int = 1) -> Tensor:
    """2-D cross-correlation, N x C x H x W input, O x C/groups x kH x kW weight."""
    if x.ndim != 4 or w.ndim != 4:
        raise InvalidShapeError(f"conv2d: input {x.shape} and weight {w.shape} must be 4-d")
    N, C, H, W = x.shape
    O, Cg, kh, kw = w.shape
    G = groups
    if G < 1 or C % G or O % G or Cg != C // G:
        raise InvalidShapeError(
            f"conv2d: input {x.shape} incompatible with weight {w.shape} (groups={groups})"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise InvalidShapeError(f"conv2d: kernel must be odd, weight {w.shape}")
    if bias is not None and bias.shape != (O,):
        raise InvalidShapeError(f"conv2d: bias {bias.shape} does not match weight {w.shape}")
    p, s = padding, stride
    Hp, Wp = H + 2 * p, W + 2 * p
    Ho, Wo = (Hp - kh) // s + 1, (Wp - kw) // s + 1
    if Ho < 1 or Wo < 1:
        raise InvalidShapeError(f"conv2d: input {x.shape} too small for weight {w.shape}")
    Og, P = O // G, Ho * Wo
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    xg = xp.reshape(N, G, Cg, Hp, Wp)
    wg = w.data.reshape(G, Og, Cg, kh, kw)
    depthwise = Cg == 1 and Og == 1

    def window(arr, i, j):
        return arr[..., i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s]

    out = np.zeros((N, G, Og, P), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = window(xg, i, j).reshape(N, G, Cg, P)
            if depthwise:
                out += wg[None, :, :, 0, i, j, None] * patch
            else:
                out += wg[:, :, :, i, j] @ patch
    out = out.reshape(N, O, Ho, Wo)
    if bias is not None:
        out += bias.data[None, :, None, None]
    parents = (x, w) if bias is None else (x, w, bias)

    def bw(g):
        gg = g.reshape(N, G, Og, P)
        gx = gw = None
        if w.requires_grad:
            gw = np.empty_like(wg)
            for i in range(kh):
                for j in range(kw):
                    patch = window(xg, i, j).reshape(N, G, Cg, P)
                    if depthwise:
                        gw[:, 0, 0, i, j] = (gg[:, :, 0] * patch[:, :, 0]).sum(axis=(0, 2))
                    else:
                        gw[:, :, :, i, j] = (gg @ np.swapaxes(patch, -1, -2)).sum(axis=0)
            gw = gw.reshape(w.shape)
        if x.requires_grad:
            gxp = np.zeros_like(xg)
            wt = np.swapaxes(wg, 1, 2)
            for i in range(kh):
                for j in range(kw):
                    if depthwise:
                        contrib = wg[None, :, :, 0, i, j, None] * gg
                    else:
                        contrib = wt[:, :, :, i, j] @ gg
                    window(gxp, i, j)[...] += contrib.reshape(N, G, Cg, Ho, Wo)
            gx = gxp.reshape(N, C, Hp, Wp)[:, :, p:p + H, p:p + W]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _node(out, parents, bw, "conv2d")


def dwconv1d(x: Tensor, w: Tensor, padding: int | None = None) -> Tensor:
    """Depthwise 1-D convolution, B x C x L input, C x 1 x k weight, length preserved."""
    if x.ndim != 3 or w.ndim != 3 or w.shape[0] != x.shape[1] or w.shape[1] != 1:
        raise InvalidShapeError(f"dwconv1d: input {x.shape} incompatible with weight {w.shape}")
    k = w.shape[2]
    if k % 2 == 0:
        raise InvalidShapeError(f"dwconv1d: kernel size must be odd, got {k}")
    p = (k - 1) // 2
    if padding is not None and padding != p:
        raise InvalidShapeError(f"dwconv1d: padding must be {p} for kernel {k}, got {padding}")
    L = x.shape[2]
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p)))
    wd = w.data[:, 0, :]
    out = np.zeros_like(x.data)
    for t in range(k):
        out += wd[None, :, t, None] * xp[:, :, t:t + L]

    def bw(g):
        gx = gw = None
        if w.requires_grad:
            gw = np.stack([(g * xp[:, :, t:t + L]).sum(axis=(0, 2)) for t in range(k)], axis=1)
            gw = gw[:, None, :]
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for t in range(k):
                gxp[:, :, t:t + L] += wd[None, :, t, None] * g
            gx = gxp[:, :, p:p + L]
        return gx, gw

    return _node(out, (x, w), bw, "dwconv1d")


def unfold2d(x: Tensor, size: int, stride: int) -> Tensor:
    """Sliding size x size windows: N x C x H x W -> N x C x nH x nW x size x size."""
    N, C, H, W = x.shape
    nH, nW = (H - size) // stride + 1, (W - size) // stride + 1
    if nH < 1 or nW < 1:
        raise InvalidShapeError(f"unfold2d: input {x.shape} smaller than window {size}")
    view = np.lib.stride_tricks.sliding_window_view(x.data, (size, size), axis=(2, 3))
    out = np.ascontiguousarray(view[:, :, ::stride, ::stride][:, :, :nH, :nW])

    def bw(g):
        gx = np.zeros_like(x.data)
        for i in range(nH):
            for j in range(nW):
                gx[:, :, i * stride:i * stride + size, j * stride:j * stride + size] += g[:, :, i, j]
        return (gx,)

    return _node(out, (x,), bw, "unfold2d")


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    N, Cr, H, W = x.shape
    if Cr % (r * r):
        raise InvalidShapeError(f"pixel_shuffle: {Cr} channels not divisible by r^2={r * r}")
    C = Cr // (r * r)
    out = x.data.reshape(N, C, r, r, H, W).transpose(0, 1, 4, 2, 5, 3).reshape(N, C, H * r, W * r)

    def bw(g):
        return (g.reshape(N, C, H, r, W, r).transpose(0, 1, 3, 5, 2, 4).reshape(x.shape),)

    return _node(out, (x,), bw, "pixel_shuffle")


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    N, C, Hr, Wr = x.shape
    if Hr % r or Wr % r:
        raise InvalidShapeError(f"pixel_unshuffle: spatial {Hr}x{Wr} not divisible by {r}")
    H, W = Hr // r, Wr // r
    out = x.data.reshape(N, C, H, r, W, r).transpose(0, 1, 3, 5, 2, 4).reshape(N, C * r * r, H, W)

    def bw(g):
        return (g.reshape(N, C, r, r, H, W).transpose(0, 1, 4, 2, 5, 3).reshape(x.shape),)

    return _node(out, (x,), bw, "pixel_unshuffle")


# ---------------------------------------------------------------- normalization

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5, axis: int = 1) -> Tensor:
    """Normalize each token over the channel axis (axis 1 for NCHW, -1 for token rows)."""
    ax = axis % x.ndim
    C = x.shape[ax]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise InvalidShapeError(f"layer_norm: affine {gamma.shape}/{beta.shape} vs input {x.shape}")
    bshape = [1] * x.ndim
    bshape[ax] = C
    mu = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=ax, keepdims=True) + eps)
    xhat = xc * inv
    gb = gamma.data.reshape(bshape)
    out = xhat * gb + beta.data.reshape(bshape)
    others = tuple(i for i in range(x.ndim) if i != ax)

    def bw(g):
        gh = g * gb
        gx = inv * (gh - gh.mean(axis=ax, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=ax, keepdims=True))
        return gx, (g * xhat).sum(axis=others), g.sum(axis=others)

    return _node(out.astype(x.dtype), (x, gamma, beta), bw, "layer_norm")


def group_norm(x: Tensor, num_groups: int, eps: float = 1e-5) -> Tensor:
    """Normalize each (sample, channel group) over its channels and positions; no affine."""
    N, C = x.shape[:2]
    if num_groups < 1 or C % num_groups:
        raise InvalidConfigError(f"group_norm: {C} channels not divisible into {num_groups} groups")
    r = x.data.reshape(N, num_groups, -1)
    xc = r - r.mean(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=2, keepdims=True) + eps)
    xhat = xc * inv

    def bw(g):
        g = g.reshape(N, num_groups, -1)
        gx = inv * (g - g.mean(axis=2, keepdims=True) - xhat * (g * xhat).mean(axis=2, keepdims=True))
        return (gx.reshape(x.shape),)

    return _node(xhat.reshape(x.shape).astype(x.dtype), (x,), bw, "group_norm")


# ---------------------------------------------------------------- parameters

class ParamStore:
    """Ordered name -> leaf tensor map; gradients live on the tensors."""

    def __init__(self, items: Iterable[tuple[str, Tensor]] = ()):
        self._params: dict[str, Tensor] = {}
        for name, t in items:
            self.add(name, t)

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._params:
            raise InvalidConfigError(f"duplicate parameter name {name!r}")
        self._params[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.items())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def numel(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grad(self, name: str) -> np.ndarray:
        t = self._params[name]
        return np.zeros_like(t.data) if t.grad is None else t.grad
