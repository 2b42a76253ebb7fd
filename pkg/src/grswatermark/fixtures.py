"""Small deterministic synthetic test images (128x128, 8-bit range).

They let the test-suite and desk-scale experiments run without external
image sets. Generation is seeded, so the PGM files in ``data/`` can be
regenerated bit-exactly with ``python -m grswatermark.fixtures``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .image_io import Image, load, quantize, save

SIZE = 128
NAMES = ("gradient", "checkerboard", "bandlimited_noise", "blobs")
DATA_DIR = Path(__file__).parent / "data"


def gradient(n=SIZE):
    y, x = np.mgrid[0:n, 0:n] / (n - 1)
    return 20.0 + 215.0 * (0.6 * x + 0.4 * y)


def checkerboard(n=SIZE, square=16):
    y, x = np.mgrid[0:n, 0:n]
    board = ((x // square + y // square) % 2).astype(np.float64)
    return 30.0 + 195.0 * ndimage.gaussian_filter(board, 1.0, mode="wrap")


def bandlimited_noise(n=SIZE, seed=7):
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.normal(size=(n, n)), 2.5, mode="wrap")
    field = (field - field.mean()) / field.std()
    return np.clip(128.0 + 40.0 * field, 0, 255)


def blobs(n=SIZE, count=64, seed=11):
    """Signed Gaussian blobs on a torus, stretched to [16, 239].

    Enough blobs overlap that no flat background plateau remains.
    """
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:n, 0:n]
    img = np.zeros((n, n))
    for _ in range(count):
        cy, cx = rng.uniform(0, n, size=2)
        sigma = rng.uniform(3, 14)
        amp = rng.uniform(-1, 1)
        dy = np.minimum(abs(y - cy), n - abs(y - cy))
        dx = np.minimum(abs(x - cx), n - abs(x - cx))
        img += amp * np.exp(-(dx**2 + dy**2) / (2 * sigma**2))
    img = (img - img.min()) / (img.max() - img.min())
    return 16.0 + 223.0 * img


_GENERATORS = {
    "gradient": gradient,
    "checkerboard": checkerboard,
    "bandlimited_noise": bandlimited_noise,
    "blobs": blobs,
}


def make(name: str) -> Image:
    """Generate fixture ``name`` as an 8-bit-valued Image."""
    return quantize(Image(_GENERATORS[name]()))


def path(name: str) -> Path:
    return DATA_DIR / f"{name}.pgm"


def load_fixture(name: str) -> Image:
    p = path(name)
    return load(p) if p.exists() else make(name)


def all_fixtures() -> dict[str, Image]:
    return {name: load_fixture(name) for name in NAMES}


def write_all(directory=DATA_DIR):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in NAMES:
        save(make(name), directory / f"{name}.pgm")


if __name__ == "__main__":
    write_all()
