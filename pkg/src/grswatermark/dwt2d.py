"""Single-level separable 2-D DWT with periodic extension.

Analysis along an axis of length L computes, for k = 0 .. L/2 - 1,

    a[k] = sum_n h[n] x[(2k - n) mod L]

i.e. circular convolution followed by keeping even-indexed outputs.
Synthesis upsamples, convolves with g0/g1 and advances by the filter
bank delay, which inverts analysis exactly whenever the filter quadruple
satisfies the perfect reconstruction conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .filterbank import WaveletSpec
from .image_io import Image

SUBBANDS = ("ll", "lh", "hl", "hh")


@dataclass(frozen=True, eq=False)
class SubbandSet:
    """LL, LH, HL, HH quarter-size matrices of one decomposition level.

    The first letter is the filter applied along rows (horizontal), the
    second the filter applied along columns.
    """

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray
    spec_name: str

    def __post_init__(self):
        shape = None
        for name in SUBBANDS:
            a = np.array(getattr(self, name), dtype=np.float64)
            if a.ndim != 2:
                raise ValueError(f"subband {name} must be 2-D")
            if shape is None:
                shape = a.shape
            elif a.shape != shape:
                raise ValueError(f"inconsistent subband shapes: {shape} vs {a.shape} ({name})")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"subband {name} has non-finite entries")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ll.shape

    def band(self, name: str) -> np.ndarray:
        return getattr(self, name.lower())

    def bands(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in SUBBANDS}

    def replace(self, **bands) -> SubbandSet:
        current = self.bands()
        current.update({k.lower(): v for k, v in bands.items()})
        return SubbandSet(spec_name=self.spec_name, **current)

    def energy(self) -> float:
        return float(sum(np.sum(b * b) for b in self.bands().values()))

    def __sub__(self, other):
        if not isinstance(other, SubbandSet):
            return NotImplemented
        if other.spec_name != self.spec_name:
            raise ValueError(f"wavelet mismatch: {self.spec_name} vs {other.spec_name}")
        return SubbandSet(
            spec_name=self.spec_name,
            **{n: getattr(self, n) - getattr(other, n) for n in SUBBANDS},
        )

    def __add__(self, other):
        if not isinstance(other, SubbandSet):
            return NotImplemented
        if other.spec_name != self.spec_name:
            raise ValueError(f"wavelet mismatch: {self.spec_name} vs {other.spec_name}")
        return SubbandSet(
            spec_name=self.spec_name,
            **{n: getattr(self, n) + getattr(other, n) for n in SUBBANDS},
        )


def analyze(x, h, axis):
    """Circular convolution with ``h`` along ``axis``, keeping even outputs."""
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    out = np.zeros((x.shape[0] // 2,) + x.shape[1:])
    for n, c in enumerate(h):
        if c != 0.0:
            out += c * np.roll(x, n, axis=0)[::2]
    return np.moveaxis(out, 0, axis)


def synthesize(a, g, delay, axis):
    """Upsample by 2, circularly convolve with ``g``, advance by ``delay``."""
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, 0)
    up = np.zeros((2 * a.shape[0],) + a.shape[1:])
    up[::2] = a
    out = np.zeros_like(up)
    for n, c in enumerate(g):
        if c != 0.0:
            out += c * np.roll(up, n - delay, axis=0)
    return np.moveaxis(out, 0, axis)


def _check_dims(rows, cols, spec):
    if rows % 2 or cols % 2:
        raise DimensionError(f"dimensions must be even, got {rows}x{cols}")
    if min(rows, cols) < spec.length:
        raise DimensionError(
            f"image {rows}x{cols} is smaller than the {spec.length}-tap filters of {spec.name}"
        )


def dwt2(img: Image | np.ndarray, spec: WaveletSpec) -> SubbandSet:
    """One-level 2-D analysis of ``img``."""
    x = img.samples if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("dwt2 needs a 2-D array")
    _check_dims(*x.shape, spec)
    lo = analyze(x, spec.h0, axis=1)
    hi = analyze(x, spec.h1, axis=1)
    return SubbandSet(
        ll=analyze(lo, spec.h0, axis=0),
        lh=analyze(lo, spec.h1, axis=0),
        hl=analyze(hi, spec.h0, axis=0),
        hh=analyze(hi, spec.h1, axis=0),
        spec_name=spec.name,
    )


def idwt2_array(subbands: SubbandSet, spec: WaveletSpec) -> np.ndarray:
    """Inverse of :func:`dwt2` returning a plain array (no Image checks)."""
    if subbands.spec_name != spec.name:
        raise ValueError(
            f"subbands were produced by {subbands.spec_name!r}, not {spec.name!r}"
        )
    r, c = subbands.shape
    _check_dims(2 * r, 2 * c, spec)
    d = spec.delay
    lo = synthesize(subbands.ll, spec.g0, d, 0) + synthesize(subbands.lh, spec.g1, d, 0)
    hi = synthesize(subbands.hl, spec.g0, d, 0) + synthesize(subbands.hh, spec.g1, d, 0)
    return synthesize(lo, spec.g0, d, 1) + synthesize(hi, spec.g1, d, 1)


def idwt2(subbands: SubbandSet, spec: WaveletSpec) -> Image:
    """Inverse of :func:`dwt2`; output is twice the subband size."""
    return Image(idwt2_array(subbands, spec))


# --- raw sidecar ----------------------------------------------------------------

RAW_MAGIC = b"GRSDWT01"
_RAW_HEADER = np.dtype([("magic", "S8"), ("rows", "<u4"), ("cols", "<u4")])


def subbands_to_raw(subbands: SubbandSet) -> bytes:
    """16-byte header (magic, rows, cols) then LL, LH, HL, HH as <f8, row-major.

    ``rows``/``cols`` are the subband dimensions.
    """
    r, c = subbands.shape
    header = np.array([(RAW_MAGIC, r, c)], dtype=_RAW_HEADER).tobytes()
    body = np.stack([subbands.band(b) for b in SUBBANDS]).astype("<f8").tobytes()
    return header + body


def subbands_from_raw(data: bytes, spec_name: str = "") -> SubbandSet:
    if len(data) < _RAW_HEADER.itemsize:
        raise ValueError("raw sidecar too short for its header")
    head = np.frombuffer(data[: _RAW_HEADER.itemsize], dtype=_RAW_HEADER)[0]
    if head["magic"] != RAW_MAGIC:
        raise ValueError("not a subband sidecar (bad magic)")
    r, c = int(head["rows"]), int(head["cols"])
    body = data[_RAW_HEADER.itemsize:]
    if len(body) != 4 * r * c * 8:
        raise ValueError(f"sidecar body has {len(body)} bytes, expected {4 * r * c * 8}")
    bands = np.frombuffer(body, dtype="<f8").reshape(4, r, c).astype(np.float64)
    return SubbandSet(spec_name=spec_name, **dict(zip(SUBBANDS, bands)))
