"""Two-channel wavelet filter banks.

Provides the Golay-Rudin-Shapiro (GRS) family, built from complementary
+/-1 polynomial pairs, together with fixed tables for the regular wavelets
used for comparison (Daubechies-4/8, Coiflet-6, biorthogonal 6/2).

Filter naming follows the length of the analysis lowpass: ``daubechies4``
is the 4-tap Daubechies filter (two vanishing moments).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np

TOL = 1e-10

ORTHOGONAL = "orthogonal"
BIORTHOGONAL = "biorthogonal"


@dataclass(frozen=True)
class FilterPair:
    """Two equal-length polynomials ``(h00, h01)``."""

    h00: tuple
    h01: tuple

    def __post_init__(self):
        if len(self.h00) != len(self.h01):
            raise ValueError(
                f"filter pair lengths differ: {len(self.h00)} != {len(self.h01)}"
            )
        if len(self.h00) < 1:
            raise ValueError("filter pair must be non-empty")

    def __len__(self):
        return len(self.h00)


@dataclass(frozen=True, eq=False)
class WaveletSpec:
    """Analysis/synthesis filter quadruple.

    ``h0``/``h1`` analyse, ``g0``/``g1`` synthesise. ``raw_h0``/``raw_h1``
    hold the coefficients before ``normalization`` was applied (for GRS
    filters these are the +/-1 values).
    """

    name: str
    h0: np.ndarray
    h1: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    delay: int
    kind: str
    normalization: float = 1.0
    raw_h0: np.ndarray | None = None
    raw_h1: np.ndarray | None = None

    def __post_init__(self):
        for field in ("h0", "h1", "g0", "g1", "raw_h0", "raw_h1"):
            value = getattr(self, field)
            if value is None:
                value = np.asarray(getattr(self, field[-2:]), dtype=np.float64)
            a = np.array(value, dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, field, a)
        if self.kind not in (ORTHOGONAL, BIORTHOGONAL):
            raise ValueError(f"unknown wavelet class {self.kind!r}")

    @property
    def length(self) -> int:
        return max(len(self.h0), len(self.h1), len(self.g0), len(self.g1))

    def __eq__(self, other):
        if not isinstance(other, WaveletSpec):
            return NotImplemented
        return (
            self.name == other.name
            and self.kind == other.kind
            and self.delay == other.delay
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("h0", "h1", "g0", "g1", "raw_h0", "raw_h1")
            )
        )

    __hash__ = None


def _autocorrelation(a):
    a = np.asarray(a, dtype=np.float64)
    return np.convolve(a, a[::-1])


def is_complementary(pair: FilterPair, tol: float = TOL) -> tuple[bool, float]:
    """Check H00(z)H00(1/z) + H01(z)H01(1/z) == 2l.

    Returns ``(ok, residual)`` where residual is the largest off-lag
    magnitude of the summed autocorrelations.
    """
    if len(pair.h00) != len(pair.h01):
        raise ValueError("complementary pair must have equal lengths")
    l = len(pair.h00)
    total = _autocorrelation(pair.h00) + _autocorrelation(pair.h01)
    centre = l - 1
    off = np.delete(total, centre)
    residual = float(np.max(np.abs(off))) if off.size else 0.0
    ok = abs(total[centre] - 2 * l) <= tol and residual <= tol
    return bool(ok), residual


def grs_kernel(level: int) -> FilterPair:
    """Rudin-Shapiro pair of length ``2**level``.

    Starts from ([1, 1], [1, -1]) and doubles with A' = A|B, B' = A|-B.
    """
    if int(level) != level or level < 1:
        raise ValueError(f"GRS level must be a positive integer, got {level!r}")
    a, b = [1, 1], [1, -1]
    for _ in range(int(level) - 1):
        a, b = a + b, a + [-x for x in b]
    return FilterPair(tuple(a), tuple(b))


def derive_highpass(h0, N: int) -> np.ndarray:
    """Coefficients of -z^-N H0(-1/z): h1[n] = -(-1)^(N-n) h0[N-n]."""
    h0 = np.asarray(h0, dtype=np.float64)
    if N != len(h0) - 1:
        raise ValueError(f"filter delay N must equal len(h0) - 1 = {len(h0) - 1}, got {N}")
    n = np.arange(N + 1)
    return -((-1.0) ** (N - n)) * h0[N - n]


def _orthogonal(name, raw_h0, raw_h1=None, normalization=None):
    raw_h0 = np.asarray(raw_h0, dtype=np.float64)
    N = len(raw_h0) - 1
    if raw_h1 is None:
        raw_h1 = derive_highpass(raw_h0, N)
    if normalization is None:
        normalization = 1.0 / float(np.linalg.norm(raw_h0))
    h0 = raw_h0 * normalization
    h1 = np.asarray(raw_h1, dtype=np.float64) * normalization
    return WaveletSpec(
        name=name,
        h0=h0,
        h1=h1,
        g0=h0[::-1],
        g1=h1[::-1],
        delay=N,
        kind=ORTHOGONAL,
        normalization=normalization,
        raw_h0=raw_h0,
        raw_h1=raw_h1,
    )


def grs_wavelet(level: int) -> WaveletSpec:
    """Orthogonal GRS wavelet from the level-``level`` Rudin-Shapiro kernel.

    The kernel's polyphase components are interleaved,
    H0(z) = H00(z^2) + z^-1 H01(z^2), and the filters scaled to unit norm.
    Level 1 gives GRS4: raw h0 = [1, 1, 1, -1], raw h1 = [-1, -1, 1, -1].
    """
    pair = grs_kernel(level)
    l = len(pair)
    raw = np.empty(2 * l)
    raw[0::2] = pair.h00
    raw[1::2] = pair.h01
    return _orthogonal(f"GRS{2 * l}", raw, normalization=1.0 / sqrt(2 * l))


# Orthonormal lowpass tables (sum sqrt(2)); Daubechies-4 and Coiflet-6 in
# closed form, Daubechies-8 to double precision.
_S3 = sqrt(3.0)
_S7 = sqrt(7.0)
_DAUB4 = [(1 + _S3) / (4 * sqrt(2)), (3 + _S3) / (4 * sqrt(2)),
          (3 - _S3) / (4 * sqrt(2)), (1 - _S3) / (4 * sqrt(2))]
_DAUB8 = [
    0.2303778133088965, 0.7148465705529157, 0.6308807679298589,
    -0.027983769416859854, -0.18703481171909309, 0.030841381835560764,
    0.0328830116668852, -0.010597401785069032,
]
_COIF6 = [
    (_S7 - 3) / (16 * sqrt(2)), (1 - _S7) / (16 * sqrt(2)),
    (14 - 2 * _S7) / (16 * sqrt(2)), (14 + 2 * _S7) / (16 * sqrt(2)),
    (5 + _S7) / (16 * sqrt(2)), (1 - _S7) / (16 * sqrt(2)),
]
_COIF6 = _COIF6[::-1]

# Spline biorthogonal 1.3: 6-tap analysis lowpass, 2-tap analysis highpass.
_BIOR62_H0 = [c * sqrt(2) / 16 for c in (-1, 1, 8, 8, 1, -1)]
_BIOR62_H1 = [-1 / sqrt(2), 1 / sqrt(2)]


def _biorthogonal(name, h0, h1):
    h0 = np.asarray(h0, dtype=np.float64)
    h1 = np.asarray(h1, dtype=np.float64)
    alt0 = (-1.0) ** np.arange(len(h0))
    alt1 = (-1.0) ** np.arange(len(h1))
    # alias cancellation: G0(z) = H1(-z), G1(z) = -H0(-z)
    g0 = h1 * alt1
    g1 = -h0 * alt0
    dist = 0.5 * _polyadd(np.convolve(g0, h0), np.convolve(g1, h1))
    D = int(np.argmax(np.abs(dist)))
    scale = 1.0 / dist[D]
    return WaveletSpec(
        name=name, h0=h0, h1=h1, g0=g0 * scale, g1=g1 * scale,
        delay=D, kind=BIORTHOGONAL, raw_h0=h0, raw_h1=h1,
    )


STANDARD_NAMES = ("daubechies4", "daubechies8", "coiflet6", "biorthogonal6.2", "grs4")


def standard_wavelet(name: str) -> WaveletSpec:
    """Look up one of the five named wavelets (case-insensitive).

    ``grsN`` for N = 4, 8, 16, ... also resolves to the GRS family.
    """
    key = name.lower().replace("_", "").replace("-", "")
    if key == "daubechies4":
        return _orthogonal("daubechies4", _DAUB4)
    if key == "daubechies8":
        return _orthogonal("daubechies8", _DAUB8)
    if key == "coiflet6":
        return _orthogonal("coiflet6", _COIF6)
    if key in ("biorthogonal6.2", "bior6.2"):
        return _biorthogonal("biorthogonal6.2", _BIOR62_H0, _BIOR62_H1)
    if key.startswith("grs") and key[3:].isdigit():
        taps = int(key[3:])
        level = taps.bit_length() - 2
        if taps >= 4 and taps == 2 ** (level + 1):
            spec = grs_wavelet(level)
            if key == "grs4":
                spec = _renamed(spec, "grs4")
            return spec
    raise KeyError(f"unknown wavelet {name!r}; valid names: {', '.join(STANDARD_NAMES)}")


def _renamed(spec, name):
    return WaveletSpec(
        name=name, h0=spec.h0, h1=spec.h1, g0=spec.g0, g1=spec.g1,
        delay=spec.delay, kind=spec.kind, normalization=spec.normalization,
        raw_h0=spec.raw_h0, raw_h1=spec.raw_h1,
    )


def _modulate(h):
    return h * (-1.0) ** np.arange(len(h))


def _polyadd(a, b):
    out = np.zeros(max(len(a), len(b)))
    out[: len(a)] += a
    out[: len(b)] += b
    return out


def pr_terms(spec: WaveletSpec) -> tuple[np.ndarray, np.ndarray]:
    """Distortion G0H0 + G1H1 and aliasing G0(z)H0(-z) + G1(z)H1(-z).

    Perfect reconstruction means distortion == 2 z^-delay and alias == 0.
    """
    distortion = _polyadd(np.convolve(spec.g0, spec.h0), np.convolve(spec.g1, spec.h1))
    alias = _polyadd(
        np.convolve(spec.g0, _modulate(spec.h0)), np.convolve(spec.g1, _modulate(spec.h1))
    )
    return distortion, alias


def verify_perfect_reconstruction(spec: WaveletSpec) -> float:
    """Largest deviation of the PR conditions from a pure delay / zero alias."""
    distortion, alias = pr_terms(spec)
    ideal = np.zeros_like(distortion)
    if 0 <= spec.delay < len(ideal):
        ideal[spec.delay] = 2.0
    return float(max(np.max(np.abs(distortion - ideal)), np.max(np.abs(alias))))


def frequency_response(h, n_points: int) -> np.ndarray:
    """|H(e^jw)| at ``n_points`` uniformly spaced w in [0, pi]."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    h = np.asarray(h, dtype=np.float64)
    w = np.linspace(0.0, np.pi, n_points)
    k = np.arange(len(h))
    return np.abs(np.exp(-1j * np.outer(w, k)) @ h)
