"""Parameter containers and the elementary layers built on the tensor tape."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ParamStore, Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) resampled until every value lies within two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


def param(data, dtype) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


class Module:
    """Base class. Parameters and children are discovered from attributes in
    assignment order, so names are deterministic and follow declaration order."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def params(self) -> ParamStore:
        return ParamStore(self.named_parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng, dtype=np.float32, bias: bool = True):
        self.weight = param(trunc_normal(rng, (d_out, d_in), dtype=dtype), dtype)
        self.bias = param(np.zeros(d_out), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng, dtype=np.float32, groups: int = 1):
        self.weight = param(trunc_normal(rng, (c_out, c_in // groups, k, k), dtype=dtype), dtype)
        self.bias = param(np.zeros(c_out), dtype)
        self.groups = groups
        self.padding = k // 2

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, padding=self.padding, groups=self.groups)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-5):
        self.weight = param(np.ones(dim), dtype)
        self.bias = param(np.zeros(dim), dtype)
        self.eps = eps

    def forward(self, x: Tensor, axis: int = 1) -> Tensor:
        return T.layer_norm(x, self.weight, self.bias, self.eps, axis=axis)
