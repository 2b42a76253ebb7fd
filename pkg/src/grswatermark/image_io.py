"""Grayscale images and binary PGM (P5) serialization.

Images are kept as float64 matrices internally. Quantization to 8 bits
happens only when writing (or explicitly via :func:`quantize`).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, PGMParseError, UnsupportedFormatError

_WHITESPACE = b" \t\n\r\v\f"


@dataclass(frozen=True, eq=False)
class Image:
    """Real-valued grayscale image with even dimensions."""

    samples: np.ndarray

    def __post_init__(self):
        a = np.array(self.samples, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError(f"image must be 2-D, got shape {a.shape}")
        r, c = a.shape
        if r < 2 or c < 2 or r % 2 or c % 2:
            raise DimensionError(f"image dimensions must be even and >= 2, got {r}x{c}")
        if not np.all(np.isfinite(a)):
            raise ValueError("image samples must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def rows(self) -> int:
        return self.samples.shape[0]

    @property
    def cols(self) -> int:
        return self.samples.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.samples, other.samples))

    __hash__ = None


def round_half_away(x):
    """Round to nearest integer, ties away from zero (np.round ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(img: Image) -> Image:
    """Clamp to [0, 255] and round, i.e. what :func:`write_pgm` stores."""
    return Image(_to_bytes(img.samples).astype(np.float64))


def _to_bytes(samples):
    return np.clip(round_half_away(samples), 0, 255).astype(np.uint8)


def _skip_space_and_comments(data, pos):
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch in _WHITESPACE:
            pos += 1
        else:
            break
    return pos


def _read_int(data, pos, what):
    pos = _skip_space_and_comments(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        raise PGMParseError(f"expected {what}", start)
    return int(data[start:pos]), pos


def read_pgm(data: bytes) -> Image:
    """Parse a binary 8-bit PGM (P5) byte string."""
    data = bytes(data)
    if data[:2] != b"P5":
        raise PGMParseError("missing P5 magic number", 0)
    pos = 2
    if pos < len(data) and data[pos : pos + 1] not in _WHITESPACE + b"#":
        raise PGMParseError("expected whitespace after magic", pos)
    width, pos = _read_int(data, pos, "width")
    height, pos = _read_int(data, pos, "height")
    maxval, pos = _read_int(data, pos, "maxval")
    if width <= 0 or height <= 0:
        raise PGMParseError("non-positive dimension", pos)
    if maxval == 0 or maxval > 255:
        raise UnsupportedFormatError(f"maxval {maxval} not supported (need 1..255)")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise PGMParseError("expected single whitespace before raster", pos)
    pos += 1
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise PGMParseError(f"raster truncated: need {need} bytes, have {len(raster)}", pos + len(raster))
    if width % 2 or height % 2:
        raise DimensionError(f"odd image dimension {width}x{height}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return Image(pixels.astype(np.float64))


def write_pgm(img: Image) -> bytes:
    """Serialize as binary P5, clamping to [0, 255] with half-away rounding."""
    header = f"P5\n{img.cols} {img.rows}\n255\n".encode("ascii")
    return header + _to_bytes(img.samples).tobytes()


def load(path) -> Image:
    return read_pgm(Path(path).read_bytes())


def save(img: Image, path) -> None:
    Path(path).write_bytes(write_pgm(img))


def rescale_for_view(a) -> Image:
    """Affinely map a real matrix onto [0, 255] (constant input maps to 0)."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi > lo:
        a = (a - lo) * (255.0 / (hi - lo))
    else:
        a = np.zeros_like(a)
    return Image(a)
