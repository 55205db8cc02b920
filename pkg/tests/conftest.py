import numpy as np
import pytest

from saat.verify import toy_config


def synthetic_image(size=64, seed=0):
    """Smooth ramps, flat rectangles, disks and a fine sinusoid: enough structure
    that bicubic upscaling loses visible detail."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.stack([0.3 + 0.4 * xx, 0.2 + 0.5 * yy, 0.6 - 0.3 * xx * yy], axis=-1)
    for _ in range(6):
        c = rng.random(3)
        y0, x0 = rng.integers(0, size - 8, 2)
        h, w = rng.integers(6, size // 2, 2)
        img[y0:y0 + h, x0:x0 + w] = c
    for _ in range(3):
        cy, cx, r = rng.random(3) * [size, size, size / 4]
        img[(yy * size - cy) ** 2 + (xx * size - cx) ** 2 < r * r] = rng.random(3)
    img += 0.08 * np.sin(2 * np.pi * (xx * 11 + yy * 5))[..., None]
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    return toy_config()
