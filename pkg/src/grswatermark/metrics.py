"""Histograms, KL / Jensen-Shannon divergences and the universal quality index.

Divergences use log base 2, so the Jensen-Shannon divergence lies in
[0, 1]. Subband histograms are taken after an affine rescale of the
subband onto [0, 255] so that they share the image's 256 bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dwt2d import SUBBANDS, dwt2
from .errors import DegenerateError, DimensionError
from .filterbank import WaveletSpec
from .image_io import Image

DEFAULT_EDGES = np.arange(257) - 0.5
TABLE_LABELS = ("original",) + SUBBANDS


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_edges: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        edges = np.array(self.bin_edges, dtype=np.float64)
        p = np.array(self.probabilities, dtype=np.float64)
        if len(edges) < 3 or np.any(np.diff(edges) <= 0):
            raise ValueError("need at least 2 bins with ascending edges")
        if p.shape != (len(edges) - 1,):
            raise ValueError("one probability per bin required")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        edges.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "probabilities", p)


def rescale(data) -> np.ndarray:
    """Affine map of ``data`` onto [0, 255]; a constant maps to 0."""
    data = np.asarray(data, dtype=np.float64)
    lo, hi = data.min(), data.max()
    if hi == lo:
        return np.zeros_like(data)
    return (data - lo) * (255.0 / (hi - lo))


def histogram(data, edges=None, rescale_first: bool = False) -> Histogram:
    """Normalized histogram; samples outside the edges land in the end bins."""
    data = np.asarray(data, dtype=np.float64).ravel()
    if data.size == 0:
        raise ValueError("histogram of empty data")
    if rescale_first:
        data = rescale(data)
    edges = DEFAULT_EDGES if edges is None else np.asarray(edges, dtype=np.float64)
    idx = np.searchsorted(edges, data, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    counts = np.bincount(idx, minlength=len(edges) - 1).astype(np.float64)
    return Histogram(edges, counts / counts.sum())


def _check_edges(p, q):
    if p.bin_edges.shape != q.bin_edges.shape or not np.array_equal(p.bin_edges, q.bin_edges):
        raise ValueError("histograms have different bin edges")


def kl_divergence(p: Histogram, q: Histogram) -> float:
    """KL(p || q) in bits; ``inf`` when p has mass where q has none."""
    _check_edges(p, q)
    pp, qq = p.probabilities, q.probabilities
    support = pp > 0
    if np.any(qq[support] == 0):
        return float("inf")
    ps, qs = pp[support], qq[support]
    return max(0.0, float(np.sum(ps * (np.log2(ps) - np.log2(qs)))))


def _kl_terms(p, m):
    support = p > 0
    return float(np.sum(p[support] * np.log2(p[support] / m[support])))


def js_divergence(p: Histogram, q: Histogram) -> float:
    """Jensen-Shannon divergence in bits (bounded by 1)."""
    _check_edges(p, q)
    pp, qq = p.probabilities, q.probabilities
    m = 0.5 * (pp + qq)
    jsd = 0.5 * _kl_terms(pp, m) + 0.5 * _kl_terms(qq, m)
    return min(1.0, max(0.0, jsd))


def jsd_table(img: Image, spec: WaveletSpec) -> np.ndarray:
    """5x5 JSD matrix among the image and its LL, LH, HL, HH subbands."""
    sb = dwt2(img, spec)
    hists = [histogram(img.samples)]
    hists += [histogram(sb.band(b), rescale_first=True) for b in SUBBANDS]
    n = len(hists)
    table = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            table[i, j] = table[j, i] = js_divergence(hists[i], hists[j])
    return table


def spreading_score(img: Image, spec: WaveletSpec) -> float:
    """Mean JSD between the image and its LH, HL and HH subbands."""
    return float(np.mean(jsd_table(img, spec)[0, 2:]))


def uqi(a: Image, b: Image, window: int = 8, stride: int = 1) -> float:
    """Universal image quality index averaged over sliding windows.

    Q = 4 s_xy m_x m_y / ((s_x^2 + s_y^2)(m_x^2 + m_y^2)) per window.
    Windows where both images are flat with equal means count as 1;
    other windows with a zero denominator are left out of the average.
    """
    x = a.samples if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    y = b.samples if isinstance(b, Image) else np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"uqi needs equal shapes, got {x.shape} and {y.shape}")
    if min(x.shape) < window:
        raise DimensionError(f"image smaller than the {window}x{window} window")
    total = 0.0
    count = 0
    n_rows = (x.shape[0] - window) // stride + 1
    chunk = max(1, 4096 // max(1, x.shape[1]))
    for r0 in range(0, n_rows, chunk):
        rows = slice(r0 * stride, min(n_rows, r0 + chunk) * stride - stride + window)
        wx = sliding_window_view(x[rows], (window, window))[::stride, ::stride]
        wy = sliding_window_view(y[rows], (window, window))[::stride, ::stride]
        mx = wx.mean(axis=(2, 3))
        my = wy.mean(axis=(2, 3))
        dx = wx - mx[..., None, None]
        dy = wy - my[..., None, None]
        vx = (dx * dx).mean(axis=(2, 3))
        vy = (dy * dy).mean(axis=(2, 3))
        cxy = (dx * dy).mean(axis=(2, 3))
        num = 4.0 * cxy * mx * my
        den = (vx + vy) * (mx * mx + my * my)
        ok = den > 0
        flat_equal = (vx == 0) & (vy == 0) & (mx == my)
        total += float(np.sum(num[ok] / den[ok])) + float(np.count_nonzero(flat_equal))
        count += int(np.count_nonzero(ok)) + int(np.count_nonzero(flat_equal))
    if count == 0:
        raise DegenerateError("no usable windows for the quality index")
    return total / count


def mse(a: Image, b: Image) -> float:
    d = a.samples - b.samples
    return float(np.mean(d * d))
