"""Full network: shallow conv, alternating SWSAG/CWSAG body, pixel-shuffle reconstruction."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import overlap_size
from .blocks import CWSAG, SWSAG, Group
from .errors import InvalidConfigError, InvalidShapeError
from .nn import Conv2d, Module
from .tensor import Tensor


@dataclass
class ModelConfig:
    scale: int = 4
    channels: int = 180
    heads: int = 6
    window_size: int = 16
    n_swsag: int = 3
    n_cwsag: int = 3
    blocks_per_group: int = 4
    shifts: tuple[int, ...] = (0, 8, 16, 24)
    alpha: float = 0.01
    beta: float = 0.01
    mu: float = 0.5
    K: int = 4
    smsa_kernels: tuple[int, ...] = (3, 5, 7, 9)
    mlp_ratio: int = 2
    conv_ffn: bool = True
    eca_additive: bool = False
    eca_reduction: int = 4
    in_channels: int = 3
    img_range: float = 1.0
    img_mean: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.shifts = tuple(int(s) for s in self.shifts)
        self.smsa_kernels = tuple(int(k) for k in self.smsa_kernels)

    def validate(self) -> ModelConfig:
        problems = []
        if self.scale not in (2, 3, 4):
            problems.append(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.channels % self.heads:
            problems.append(f"channels {self.channels} not divisible by heads {self.heads}")
        if self.channels % self.K:
            problems.append(f"channels {self.channels} not divisible by K {self.K}")
        if self.channels % self.eca_reduction:
            problems.append(f"channels {self.channels} not divisible by eca_reduction {self.eca_reduction}")
        if self.blocks_per_group != len(self.shifts):
            problems.append(f"blocks_per_group {self.blocks_per_group} != len(shifts) {len(self.shifts)}")
        if len(self.smsa_kernels) != self.K or any(k % 2 == 0 or k < 1 for k in self.smsa_kernels):
            problems.append(f"smsa_kernels {self.smsa_kernels} must be K={self.K} odd sizes")
        if self.alpha < 0 or self.beta < 0:
            problems.append("alpha and beta must be >= 0")
        if any(s < 0 for s in self.shifts):
            problems.append(f"shifts must be >= 0, got {self.shifts}")
        if self.window_size < 1:
            problems.append("window_size must be >= 1")
        try:
            overlap_size(self.window_size, self.mu)
        except InvalidConfigError as e:
            problems.append(str(e))
        if self.n_swsag < 0 or self.n_cwsag < 0:
            problems.append("group counts must be >= 0")
        if problems:
            raise InvalidConfigError("invalid model config: " + "; ".join(problems))
        return self

    def group_kinds(self) -> list[str]:
        """SWSAG, CWSAG, SWSAG, ... with any surplus of one kind at the end."""
        kinds = []
        for i in range(max(self.n_swsag, self.n_cwsag)):
            if i < self.n_swsag:
                kinds.append(SWSAG)
            if i < self.n_cwsag:
                kinds.append(CWSAG)
        return kinds

    def upsample_factors(self) -> list[int]:
        return [2, 2] if self.scale == 4 else [self.scale]

    # flat key=value serialization shared by checkpoints and run configs
    def to_lines(self) -> list[str]:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(i) for i in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            else:
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return lines

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> ModelConfig:
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise InvalidConfigError(f"unknown model key {key!r}")
            kwargs[key] = _parse_value(raw, type(getattr(cls(), key)), key)
        return cls(**kwargs)


def _parse_value(raw: str, kind, key: str):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is tuple:
            return tuple(int(v) for v in raw.strip("[]()").split(",") if v.strip())
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise InvalidConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


class SAAT(Module):
    def __init__(self, config: ModelConfig, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(config.seed)
        C = config.channels
        self.conv_first = Conv2d(config.in_channels, C, 3, rng, dtype)
        common = dict(alpha=config.alpha, beta=config.beta, mu=config.mu, K=config.K,
                      smsa_kernels=config.smsa_kernels, mlp_ratio=config.mlp_ratio,
                      conv_ffn=config.conv_ffn, eca_reduction=config.eca_reduction,
                      eca_additive=config.eca_additive)
        self.groups = [Group(kind, C, config.heads, config.window_size, config.shifts, rng,
                             dtype, **common) for kind in config.group_kinds()]
        self.conv_after_body = Conv2d(C, C, 3, rng, dtype)
        self.upsample = [Conv2d(C, C * r * r, 3, rng, dtype) for r in config.upsample_factors()]
        self.conv_last = Conv2d(C, config.in_channels, 3, rng, dtype)

    def features(self, x: Tensor) -> Tensor:
        """Shallow features F0 of a [0, 1] image batch."""
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise InvalidShapeError(
                f"expected N x {self.config.in_channels} x H x W input, got {x.shape}")
        x = T.as_tensor(x)
        if x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype))
        return self.conv_first((x - self.config.img_mean) * self.config.img_range)

    def body(self, f0: Tensor) -> Tensor:
        h = f0
        for g in self.groups:
            h = g(h)
        return self.conv_after_body(h) + f0

    def reconstruct(self, f: Tensor) -> Tensor:
        for conv, r in zip(self.upsample, self.config.upsample_factors()):
            f = T.pixel_shuffle(conv(f), r)
        return self.conv_last(f) * (1.0 / self.config.img_range) + self.config.img_mean

    def forward(self, x: Tensor) -> Tensor:
        return self.reconstruct(self.body(self.features(x)))


def build(config: ModelConfig, dtype=np.float32) -> SAAT:
    return SAAT(config, dtype)


def forward(x, model: SAAT) -> Tensor:
    return model(T.as_tensor(x))


def upscale(model: SAAT, image: np.ndarray) -> np.ndarray:
    """Tape-free inference on an H x W x 3 float image in [0, 1]; returns sH x sW x 3."""
    with T.no_grad():
        x = Tensor(np.ascontiguousarray(image.transpose(2, 0, 1)[None]), dtype=model.dtype)
        y = model(x)
    return y.data[0].transpose(1, 2, 0)
