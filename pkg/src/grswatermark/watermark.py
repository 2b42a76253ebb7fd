"""Spread-spectrum watermark generation, embedding and non-blind estimation.

A watermark is a quarter-size +/-1 message. The same message is added,
scaled by ``alpha``, to every subband in the mask. Estimation needs the
original image: W_hat = (DWT(attacked) - DWT(original)) / alpha.

Messages come from numpy's PCG64 generator seeded with the 64-bit
watermark seed; :func:`trial_seed` derives independent per-trial seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dwt2d import SUBBANDS, SubbandSet, dwt2, idwt2
from .errors import DegenerateError, DimensionError
from .filterbank import WaveletSpec, standard_wavelet
from .image_io import Image

ALL_SUBBANDS = SUBBANDS
HIGH_SUBBANDS = ("lh", "hl", "hh")
DEFAULT_ALPHA = 3.0


def parse_mask(mask) -> tuple[str, ...]:
    """Normalize a subband mask to canonical order.

    Accepts an iterable of names or a comma-separated string; ``"all"``
    and ``"high"`` are shorthands.
    """
    if isinstance(mask, str):
        key = mask.strip().lower()
        if key == "all":
            return ALL_SUBBANDS
        if key == "high":
            return HIGH_SUBBANDS
        mask = [m for m in key.split(",") if m.strip()]
    names = {str(m).strip().lower() for m in mask}
    unknown = names - set(SUBBANDS)
    if unknown:
        raise ValueError(f"unknown subband(s) {sorted(unknown)}; valid: {', '.join(SUBBANDS)}")
    if not names:
        raise ValueError("subband mask must be non-empty")
    return tuple(b for b in SUBBANDS if b in names)


def mask_label(mask) -> str:
    mask = parse_mask(mask)
    if mask == ALL_SUBBANDS:
        return "all"
    if mask == HIGH_SUBBANDS:
        return "high"
    return "+".join(mask)


def trial_seed(master: int, *keys: int) -> int:
    """64-bit seed for stream ``keys`` derived from ``master``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class Watermark:
    message: np.ndarray
    seed: int
    subband_mask: tuple[str, ...] = ALL_SUBBANDS

    def __post_init__(self):
        m = np.array(self.message, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionError("watermark message must be 2-D")
        if not np.all(np.abs(m) == 1.0):
            raise ValueError("watermark entries must be +1 or -1")
        m.setflags(write=False)
        object.__setattr__(self, "message", m)
        object.__setattr__(self, "subband_mask", parse_mask(self.subband_mask))

    @property
    def shape(self):
        return self.message.shape

    def stacked(self) -> np.ndarray:
        """The message replicated once per masked subband, flattened."""
        return np.tile(self.message.ravel(), len(self.subband_mask))


@dataclass(frozen=True)
class EmbeddingParams:
    alpha: float = DEFAULT_ALPHA
    spec_name: str = "grs4"
    subband_mask: tuple[str, ...] = ALL_SUBBANDS

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        object.__setattr__(self, "subband_mask", parse_mask(self.subband_mask))

    @property
    def spec(self) -> WaveletSpec:
        return standard_wavelet(self.spec_name)


def generate_watermark(seed: int, rows: int, cols: int, mask=ALL_SUBBANDS) -> Watermark:
    """Equiprobable +/-1 message of size (rows/2, cols/2) for an image."""
    if rows < 2 or cols < 2 or rows % 2 or cols % 2:
        raise DimensionError(f"image dimensions must be even and >= 2, got {rows}x{cols}")
    mask = parse_mask(mask)
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    bits = rng.integers(0, 2, size=(rows // 2, cols // 2), dtype=np.int8)
    return Watermark(2.0 * bits - 1.0, int(seed), mask)


def _resolve(spec_or_params):
    return spec_or_params if isinstance(spec_or_params, WaveletSpec) else spec_or_params.spec


def embed_subbands(x: SubbandSet, message: np.ndarray, alpha: float, mask) -> SubbandSet:
    """Y = X + alpha W on the masked subbands."""
    mask = parse_mask(mask)
    if message.shape != x.shape:
        raise DimensionError(f"message {message.shape} does not match subbands {x.shape}")
    return x.replace(**{b: x.band(b) + alpha * message for b in mask})


def embed(img: Image, wm: Watermark, params: EmbeddingParams, spec: WaveletSpec | None = None) -> Image:
    """Watermarked image (real-valued; quantization belongs to the channel)."""
    if wm.subband_mask != params.subband_mask:
        raise ValueError(f"watermark mask {wm.subband_mask} != params mask {params.subband_mask}")
    if wm.shape != (img.rows // 2, img.cols // 2):
        raise DimensionError(f"watermark {wm.shape} does not fit a {img.rows}x{img.cols} image")
    spec = spec or params.spec
    x = dwt2(img, spec)
    return idwt2(embed_subbands(x, wm.message, params.alpha, params.subband_mask), spec)


@dataclass(frozen=True, eq=False)
class Estimate:
    """Per-subband watermark estimates plus their stacked concatenation."""

    bands: dict = field(default_factory=dict)

    @property
    def mask(self) -> tuple[str, ...]:
        return tuple(self.bands)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.bands[b].ravel() for b in self.mask])

    def __getitem__(self, band):
        return self.bands[band.lower()]


def estimate_from_subbands(attacked: SubbandSet, original: SubbandSet, alpha: float, mask) -> Estimate:
    if attacked.shape != original.shape:
        raise DimensionError(f"subband shapes differ: {attacked.shape} vs {original.shape}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    mask = parse_mask(mask)
    return Estimate({b: (attacked.band(b) - original.band(b)) / alpha for b in mask})


def estimate_watermark(
    attacked: Image, original: Image, params: EmbeddingParams, spec: WaveletSpec | None = None
) -> Estimate:
    """Non-blind estimate W_hat = (DWT(attacked) - DWT(original)) / alpha."""
    if attacked.shape != original.shape:
        raise DimensionError(f"image shapes differ: {attacked.shape} vs {original.shape}")
    spec = spec or params.spec
    return estimate_from_subbands(
        dwt2(attacked, spec), dwt2(original, spec), params.alpha, params.subband_mask
    )


def correlation(w, w_hat) -> float:
    """Normalized inner product <w, w_hat> / (|w| |w_hat|)."""
    w = np.asarray(w, dtype=np.float64).ravel()
    w_hat = np.asarray(w_hat, dtype=np.float64).ravel()
    if w.shape != w_hat.shape:
        raise DimensionError(f"shape mismatch: {w.shape} vs {w_hat.shape}")
    nw = np.linalg.norm(w)
    nh = np.linalg.norm(w_hat)
    if nh == 0.0:
        raise DegenerateError("estimated watermark has zero energy")
    if nw == 0.0:
        raise DegenerateError("reference watermark has zero energy")
    rho = float(np.dot(w, w_hat) / (nw * nh))
    return min(1.0, max(-1.0, rho))


def correlate(wm: Watermark | np.ndarray, est: Estimate, band: str | None = None) -> float:
    """rho over the stacked estimate, or over one ``band`` only."""
    message = wm.message if isinstance(wm, Watermark) else np.asarray(wm)
    if band is not None:
        return correlation(message, est[band])
    return correlation(np.tile(message.ravel(), len(est.mask)), est.stacked())


def correlate_or_zero(wm, est: Estimate, band: str | None = None) -> float:
    """:func:`correlate` with a zero-energy estimate mapped to rho = 0."""
    try:
        return correlate(wm, est, band)
    except DegenerateError:
        return 0.0
