"""Window partitioning, cyclic shifts, shifted-window masks and relative positions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

MASK_VALUE = -1e9


@dataclass
class WindowGrid:
    windows: Tensor  # (N * nW) x G^2 x C, row-major tokens inside each window
    window_size: int
    height: int  # before padding
    width: int
    pad_h: int = 0  # reflect padding added at the bottom / right
    pad_w: int = 0
    shift: int = 0

    @property
    def padded_hw(self) -> tuple[int, int]:
        return self.height + self.pad_h, self.width + self.pad_w

    @property
    def n_windows(self) -> int:
        hp, wp = self.padded_hw
        return (hp // self.window_size) * (wp // self.window_size)


def pad_amount(n: int, G: int) -> int:
    return (-n) % G


def pad_to_multiple(x: Tensor, G: int) -> tuple[Tensor, int, int]:
    ph, pw = pad_amount(x.shape[2], G), pad_amount(x.shape[3], G)
    return T.pad(x, [(0, ph), (0, pw)], mode="reflect"), ph, pw


def window_partition(x: Tensor, G: int, shift: int = 0) -> WindowGrid:
    """Split N x C x H x W into G x G windows, reflect-padding H and W up to multiples of G."""
    if G < 1:
        raise ValueError(f"window size must be >= 1, got {G}")
    N, C, H, W = x.shape
    xp, ph, pw = pad_to_multiple(x, G)
    nh, nw = (H + ph) // G, (W + pw) // G
    win = xp.reshape(N, C, nh, G, nw, G).permute(0, 2, 4, 3, 5, 1).reshape(N * nh * nw, G * G, C)
    return WindowGrid(win, G, H, W, ph, pw, shift)


def window_reverse(grid: WindowGrid, windows: Tensor | None = None) -> Tensor:
    """Inverse of :func:`window_partition`; ``windows`` may replace the grid's tokens."""
    win = grid.windows if windows is None else windows
    G = grid.window_size
    hp, wp = grid.padded_hw
    nh, nw = hp // G, wp // G
    C = win.shape[-1]
    N = win.shape[0] // (nh * nw)
    x = win.reshape(N, nh, nw, G, G, C).permute(0, 5, 1, 3, 2, 4).reshape(N, C, hp, wp)
    if grid.pad_h or grid.pad_w:
        x = x[:, :, :grid.height, :grid.width]
    return x


def cyclic_shift(x: Tensor, s: int) -> Tensor:
    """Toroidal roll of the spatial axes by (-s, -s)."""
    if s == 0:
        return x
    return T.roll(x, (-s, -s), (2, 3))


def inverse_cyclic_shift(x: Tensor, s: int) -> Tensor:
    if s == 0:
        return x
    return T.roll(x, (s, s), (2, 3))


def region_labels(H: int, W: int, G: int, s: int) -> np.ndarray:
    """Per-pixel region id of the rolled map; ids differ across the wrap-around seams."""
    s = s % G
    labels = np.zeros((H, W), dtype=np.int64)
    if s == 0:
        return labels
    cuts = (slice(0, -G), slice(-G, -s), slice(-s, None))
    cnt = 0
    for hs in cuts:
        for ws in cuts:
            labels[hs, ws] = cnt
            cnt += 1
    return labels


def build_attn_mask(H: int, W: int, G: int, s: int) -> np.ndarray:
    """Additive nW x G^2 x G^2 mask for a map padded up to multiples of G.

    Only ``s mod G`` matters: rolling by a whole window just relabels windows.
    """
    if s < 0:
        raise ValueError(f"shift must be >= 0, got {s}")
    Hp, Wp = H + pad_amount(H, G), W + pad_amount(W, G)
    nW = (Hp // G) * (Wp // G)
    if s % G == 0:
        return np.zeros((nW, G * G, G * G))
    lab = region_labels(Hp, Wp, G, s)
    lab = lab.reshape(Hp // G, G, Wp // G, G).transpose(0, 2, 1, 3).reshape(nW, G * G)
    diff = lab[:, :, None] != lab[:, None, :]
    return np.where(diff, MASK_VALUE, 0.0)


def relative_position_index(G: int) -> np.ndarray:
    """G^2 x G^2 table of (dy + G - 1) * (2G - 1) + (dx + G - 1), d = query - key."""
    ys, xs = np.divmod(np.arange(G * G), G)
    dy = ys[:, None] - ys[None, :] + G - 1
    dx = xs[:, None] - xs[None, :] + G - 1
    return dy * (2 * G - 1) + dx
