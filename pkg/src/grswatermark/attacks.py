"""Deterministic lossy-compression attacks.

Two stand-ins for real codecs, both grayscale and without entropy coding
(which is lossless and does not affect distortion):

* :func:`jpeg_like_attack`: baseline-JPEG style 8x8 block DCT with the
  standard luminance table scaled by the usual quality mapping.
* :func:`jpeg2000_like_attack`: 3-level CDF 9/7 decomposition with a
  single deadzone quantizer whose step is searched so the first-order
  entropy of the quantization indices matches a target bit rate.

Both quantize their input to 8 bits on entry (the save-to-file step) and
return an 8-bit image.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .errors import CalibrationError, DimensionError
from .image_io import Image, round_half_away

log = logging.getLogger(__name__)

JPEG_LUMINANCE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

NONE = "none"
JPEG = "jpeg"
JPEG2000 = "jpeg2000"
_KIND_ALIASES = {
    "none": NONE,
    "jpeg": JPEG,
    "jpeg_like": JPEG,
    "jpeg2000": JPEG2000,
    "jpeg2000_like": JPEG2000,
    "j2k": JPEG2000,
}


@dataclass(frozen=True)
class AttackSpec:
    kind: str = NONE
    quality: int | None = None
    bitrate: float | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == JPEG:
            if self.quality is None or not 1 <= int(self.quality) <= 100:
                raise ValueError(f"JPEG quality must be in 1..100, got {self.quality!r}")
            object.__setattr__(self, "quality", int(self.quality))
        if kind == JPEG2000:
            if self.bitrate is None or not float(self.bitrate) > 0:
                raise ValueError(f"bit rate must be positive, got {self.bitrate!r}")
            object.__setattr__(self, "bitrate", float(self.bitrate))

    @property
    def strength(self):
        return {JPEG: self.quality, JPEG2000: self.bitrate}.get(self.kind, "")

    @property
    def label(self) -> str:
        if self.kind == JPEG:
            return f"jpeg@q{self.quality}"
        if self.kind == JPEG2000:
            return f"jpeg2000@{self.bitrate:g}bpp"
        return "none"

    def __call__(self, img: Image) -> Image:
        return apply_attack(img, self)


def apply_attack(img: Image, attack: AttackSpec) -> Image:
    if attack.kind == JPEG:
        return jpeg_like_attack(img, attack.quality)
    if attack.kind == JPEG2000:
        return jpeg2000_like_attack(img, attack.bitrate)
    return img


def _to_8bit(samples):
    return np.clip(round_half_away(samples), 0.0, 255.0)


def _pad_to_multiple(x, m):
    pr = (-x.shape[0]) % m
    pc = (-x.shape[1]) % m
    if pr or pc:
        x = np.pad(x, ((0, pr), (0, pc)), mode="symmetric")
    return x


# --- JPEG-like -------------------------------------------------------------


def quality_scale(quality: int) -> float:
    """Percentage applied to the base table (libjpeg convention)."""
    if not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be in 1..100, got {quality!r}")
    return 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality


def quantization_table(quality: int) -> np.ndarray:
    steps = round_half_away(JPEG_LUMINANCE * quality_scale(quality) / 100.0)
    return np.clip(steps, 1, 255)


def _blocks(x):
    r, c = x.shape
    return x.reshape(r // 8, 8, c // 8, 8).transpose(0, 2, 1, 3)


def _unblocks(b, shape):
    return b.transpose(0, 2, 1, 3).reshape(shape)


def jpeg_like_attack(img: Image, quality: int) -> Image:
    """Quantize ``img`` the way a baseline JPEG encoder/decoder pair would."""
    table = quantization_table(quality)
    x = _to_8bit(img.samples)
    padded = _pad_to_multiple(x, 8) - 128.0
    coeffs = dctn(_blocks(padded), type=2, norm="ortho", axes=(2, 3))
    coeffs = round_half_away(coeffs / table) * table
    rec = _unblocks(idctn(coeffs, type=2, norm="ortho", axes=(2, 3)), padded.shape) + 128.0
    return Image(_to_8bit(rec[: img.rows, : img.cols]))


# --- JPEG2000-like ---------------------------------------------------------

# CDF 9/7 lifting constants
_A = -1.586134342059924
_B = -0.052980118572961
_G = 0.882911075530934
_D = 0.443506852043971
_K = 1.230174104914001
# rescaled so both channels have unit gain norm (near-orthonormal)
_SQRT2 = np.sqrt(2.0)

J2K_LEVELS = 3
DELTA_MIN = 0.25
DELTA_MAX = 4096.0
RATE_TOLERANCE = 0.02


def _lift_forward(x):
    """CDF 9/7 along axis 0 (even length), whole-sample symmetric extension."""
    s = x[0::2].copy()
    d = x[1::2].copy()
    # d[n] += a (s[n] + s[n+1]); s[n+1] mirrors to s[n] at the right edge
    d += _A * (s + np.concatenate([s[1:], s[-1:]]))
    s += _B * (np.concatenate([d[:1], d[:-1]]) + d)
    d += _G * (s + np.concatenate([s[1:], s[-1:]]))
    s += _D * (np.concatenate([d[:1], d[:-1]]) + d)
    return s * (_SQRT2 / _K), d * (_K / _SQRT2)


def _lift_inverse(s, d):
    s = s * (_K / _SQRT2)
    d = d * (_SQRT2 / _K)
    s -= _D * (np.concatenate([d[:1], d[:-1]]) + d)
    d -= _G * (s + np.concatenate([s[1:], s[-1:]]))
    s -= _B * (np.concatenate([d[:1], d[:-1]]) + d)
    d -= _A * (s + np.concatenate([s[1:], s[-1:]]))
    x = np.empty((2 * s.shape[0],) + s.shape[1:])
    x[0::2] = s
    x[1::2] = d
    return x


def cdf97_forward(x, levels=J2K_LEVELS):
    """Mallat decomposition in place; returns the coefficient plane."""
    out = np.array(x, dtype=np.float64)
    r, c = out.shape
    for _ in range(levels):
        s, d = _lift_forward(out[:r, :c])
        block = np.concatenate([s, d], axis=0)
        s, d = _lift_forward(block.T)
        out[:r, :c] = np.concatenate([s, d], axis=0).T
        r //= 2
        c //= 2
    return out


def cdf97_inverse(coeffs, levels=J2K_LEVELS):
    out = np.array(coeffs, dtype=np.float64)
    R, C = out.shape
    for lev in reversed(range(levels)):
        r, c = R >> lev, C >> lev
        t = out[:r, :c].T
        block = _lift_inverse(t[: c // 2], t[c // 2 :]).T
        out[:r, :c] = _lift_inverse(block[: r // 2], block[r // 2 :])
    return out


def deadzone_quantize(coeffs, delta):
    return np.sign(coeffs) * np.floor(np.abs(coeffs) / delta)


def deadzone_dequantize(indices, delta):
    return np.sign(indices) * (np.abs(indices) + 0.5) * delta


def first_order_entropy(symbols) -> float:
    """Empirical entropy in bits per symbol."""
    _, counts = np.unique(symbols, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def find_step(coeffs, bitrate, tol=RATE_TOLERANCE, strict=False, max_iter=80):
    """Bisect (in log scale) for the deadzone step matching ``bitrate``.

    Entropy is non-increasing in the step. Returns ``(delta, achieved)``.
    If the target is above what the finest step achieves, the finest step
    is used (or :class:`CalibrationError` raised when ``strict``).
    """
    h_fine = first_order_entropy(deadzone_quantize(coeffs, DELTA_MIN))
    if bitrate >= h_fine - tol:
        if strict and bitrate > h_fine + tol:
            raise CalibrationError(
                f"target {bitrate} bpp unreachable: achievable range "
                f"[0, {h_fine:.4f}] bpp with steps in [{DELTA_MIN}, {DELTA_MAX}]"
            )
        return DELTA_MIN, h_fine
    lo, hi = np.log(DELTA_MIN), np.log(DELTA_MAX)
    best = (np.inf, DELTA_MIN, h_fine)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        delta = float(np.exp(mid))
        h = first_order_entropy(deadzone_quantize(coeffs, delta))
        if abs(h - bitrate) < best[0]:
            best = (abs(h - bitrate), delta, h)
        if abs(h - bitrate) <= tol:
            return delta, h
        if h > bitrate:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"could not reach {bitrate} bpp within {tol}: closest {best[2]:.4f} bpp "
        f"at step {best[1]:.6g}"
    )


def jpeg2000_like_attack(img: Image, bitrate: float, strict: bool = False) -> Image:
    """Wavelet-codec distortion at roughly ``bitrate`` bits per pixel."""
    if not bitrate > 0:
        raise ValueError(f"bit rate must be positive, got {bitrate!r}")
    if img.rows < 32 or img.cols < 32:
        raise DimensionError(f"jpeg2000-like attack needs >= 32x32, got {img.rows}x{img.cols}")
    x = _pad_to_multiple(_to_8bit(img.samples), 2**J2K_LEVELS) - 128.0
    coeffs = cdf97_forward(x)
    delta, _ = find_step(coeffs, bitrate, strict=strict)
    rec = cdf97_inverse(deadzone_dequantize(deadzone_quantize(coeffs, delta), delta)) + 128.0
    return Image(_to_8bit(rec[: img.rows, : img.cols]))
