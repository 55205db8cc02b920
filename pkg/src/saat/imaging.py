"""Image I/O, BT.601 luma, bicubic resampling and the PSNR / SSIM protocol."""
from __future__ import annotations

import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageFormatError, InvalidShapeError

log = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass
class ImageBuffer:
    pixels: np.ndarray  # H x W x channels, uint8, RGB order

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.dtype != np.uint8 or px.ndim != 3 or px.shape[2] not in (1, 3):
            raise InvalidShapeError(f"ImageBuffer needs H x W x {{1,3}} uint8, got {px.dtype} {px.shape}")
        self.pixels = np.ascontiguousarray(px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def to_float(self) -> np.ndarray:
        """H x W x C in [0, 1]."""
        return self.pixels.astype(np.float64) / 255.0

    @classmethod
    def from_float(cls, arr: np.ndarray) -> ImageBuffer:
        """Denormalize a [0, 1] array, rounding and clamping to [0, 255]."""
        return cls(np.clip(np.round(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------- file I/O

def _read_pnm(data: bytes) -> ImageBuffer:
    magic = data[:2]
    channels = 3 if magic == b"P6" else 1
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PNM header")
        tokens.append(data[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ImageFormatError(f"bad PNM header {tokens}") from None
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PNM (maxval 255) is supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    need = width * height * channels
    body = data[pos:pos + need]
    if len(body) != need:
        raise ImageFormatError(f"truncated PNM: {len(body)} of {need} sample bytes")
    return ImageBuffer(np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels).copy())


def load_image(path) -> ImageBuffer:
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P6", b"P5"):
        return _read_pnm(data)
    if data[:8] != PNG_SIGNATURE:
        raise ImageFormatError(f"{path}: unsupported image format (need PNG or binary PPM)")
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode not in ("RGB", "L"):
                im = im.convert("RGB")
            return ImageBuffer(np.asarray(im))
    except (OSError, SyntaxError, UnidentifiedImageError) as e:
        raise ImageFormatError(f"{path}: cannot decode PNG ({e})") from None


def save_image(img: ImageBuffer, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".ppm", ".pgm", ".pnm"):
        magic = b"P6" if img.channels == 3 else b"P5"
        header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + img.pixels.tobytes())
    elif suffix == ".png":
        px = img.pixels if img.channels == 3 else img.pixels[:, :, 0]
        Image.fromarray(px).save(path, format="PNG")
    else:
        raise ImageFormatError(f"{path}: unsupported output format {suffix!r}")


# ---------------------------------------------------------------- color

def rgb_to_y(img) -> np.ndarray:
    """BT.601 luma in [16, 235] from RGB samples in [0, 255]."""
    px = img.pixels if isinstance(img, ImageBuffer) else np.asarray(img)
    px = px.astype(np.float64)
    if px.ndim != 3 or px.shape[2] != 3:
        raise InvalidShapeError(f"rgb_to_y needs 3 channels, got shape {px.shape}")
    return 16.0 + (65.481 * px[..., 0] + 128.553 * px[..., 1] + 24.966 * px[..., 2]) / 255.0


# ---------------------------------------------------------------- resampling

def cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def resize_weights(in_len: int, out_len: int, scale: float, antialias: bool = True):
    """Per-output source indices (clamped to the edge) and normalized cubic weights."""
    widen = antialias and scale < 1
    width = 4.0 / scale if widen else 4.0
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = u[:, None] - idx
    w = scale * cubic(scale * dist) if widen else cubic(dist)
    w = w / w.sum(axis=1, keepdims=True)
    return np.clip(idx - 1, 0, in_len - 1).astype(np.intp), w


def _resize_axis(arr: np.ndarray, axis: int, out_len: int, scale: float) -> np.ndarray:
    idx, w = resize_weights(arr.shape[axis], out_len, scale)
    moved = np.moveaxis(arr, axis, 0)
    out = np.einsum("op,op...->o...", w, moved[idx])
    return np.moveaxis(out, 0, axis)


def bicubic_resize(img, scale_num: int, scale_den: int = 1):
    """Resize by scale_num / scale_den (cubic a=-0.5, antialiased when shrinking).

    Accepts an ImageBuffer (returns a rounded ImageBuffer) or a float H x W [x C]
    array (returns float)."""
    scale = scale_num / scale_den
    is_buf = isinstance(img, ImageBuffer)
    arr = img.pixels.astype(np.float64) if is_buf else np.asarray(img, dtype=np.float64)
    H, W = arr.shape[:2]
    oh, ow = math.ceil(H * scale - 1e-9), math.ceil(W * scale - 1e-9)
    out = _resize_axis(_resize_axis(arr, 0, oh, scale), 1, ow, scale)
    if is_buf:
        return ImageBuffer(np.clip(np.round(out), 0, 255).astype(np.uint8))
    return out


# ---------------------------------------------------------------- metrics

def _metric_planes(a, b, shave: int, y_only: bool) -> tuple[np.ndarray, np.ndarray]:
    pa = a.pixels if isinstance(a, ImageBuffer) else np.asarray(a)
    pb = b.pixels if isinstance(b, ImageBuffer) else np.asarray(b)
    if pa.ndim == 2:
        pa = pa[:, :, None]
    if pb.ndim == 2:
        pb = pb[:, :, None]
    if pa.shape != pb.shape:
        raise InvalidShapeError(f"image dims differ: {pa.shape} vs {pb.shape}")
    if y_only and pa.shape[2] == 3:
        pa, pb = rgb_to_y(pa)[:, :, None], rgb_to_y(pb)[:, :, None]
    pa, pb = pa.astype(np.float64), pb.astype(np.float64)
    if shave:
        pa, pb = pa[shave:-shave, shave:-shave], pb[shave:-shave, shave:-shave]
    return pa, pb


def psnr(a, b, shave: int = 0, y_only: bool = True) -> float:
    """PSNR in dB with peak 255; ``math.inf`` for identical inputs."""
    pa, pb = _metric_planes(a, b, shave, y_only)
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    g = np.exp(-((np.arange(size) - size // 2) ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def _ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    C1, C2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    g = _gaussian_window()
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + C1) * (2 * sxy + C2)
    den = (mx * mx + my * my + C1) * (sxx + syy + C2)
    return float(np.mean(num / den))


def ssim(a, b, shave: int = 0, y_only: bool = True) -> float:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), averaged over channels."""
    pa, pb = _metric_planes(a, b, shave, y_only)
    if min(pa.shape[:2]) < 11:
        raise InvalidShapeError(f"SSIM needs both sides >= 11 after shaving, got {pa.shape[:2]}")
    return float(np.mean([_ssim_plane(pa[:, :, c], pb[:, :, c]) for c in range(pa.shape[2])]))


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    names: list[str] = field(default_factory=list)
    psnrs: list[float] = field(default_factory=list)
    ssims: list[float] = field(default_factory=list)
    y_only: bool = True
    shave: int = 0

    HEADER = "image\tpsnr_db\tssim"

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnrs)) if self.psnrs else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssims)) if self.ssims else math.nan

    def rows(self) -> list[str]:
        return [f"{n}\t{p:.4f}\t{s:.6f}" for n, p, s in zip(self.names, self.psnrs, self.ssims)]

    def to_tsv(self) -> str:
        lines = [f"# y_only={str(self.y_only).lower()} shave={self.shave}", self.HEADER]
        lines += self.rows()
        lines.append(f"# mean\t{self.mean_psnr:.4f}\t{self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SAAT_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(names, hrs, srs, shave: int, y_only: bool = True) -> EvalReport:
    """Per-image metrics; workers capped by SAAT_THREADS, results kept in input order."""
    pairs = list(zip(hrs, srs))

    def one(pair):
        hr, sr = pair
        return psnr(sr, hr, shave, y_only), ssim(sr, hr, shave, y_only)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(one, pairs))
    return EvalReport(list(names), [r[0] for r in results], [r[1] for r in results], y_only, shave)


def mod_crop(img: ImageBuffer, scale: int) -> ImageBuffer:
    h, w = img.height - img.height % scale, img.width - img.width % scale
    return ImageBuffer(img.pixels[:h, :w])


def load_dataset(root, scale: int):
    """Read ``root/HR/*.png`` with matching ``root/LRx{scale}`` images; missing LR
    images are synthesized by bicubic downscaling. Returns [(name, hr, lr)]."""
    root = Path(root)
    hr_dir = root / "HR"
    if not hr_dir.is_dir():
        raise FileNotFoundError(f"HR directory not found: {hr_dir}")
    lr_dir = root / f"LRx{scale}"
    items = []
    for path in sorted(hr_dir.glob("*.png")):
        hr = mod_crop(load_image(path), scale)
        lr = None
        for cand in (lr_dir / path.name, lr_dir / f"{path.stem}x{scale}{path.suffix}"):
            if cand.is_file():
                lr = load_image(cand)
                break
        if lr is None:
            lr = bicubic_resize(hr, 1, scale)
        if (lr.height * scale, lr.width * scale) != (hr.height, hr.width):
            log.warning("skipping %s: LR %dx%d does not match HR %dx%d at x%d", path.name,
                        lr.width, lr.height, hr.width, hr.height, scale)
            continue
        items.append((path.name, hr, lr))
    return items
