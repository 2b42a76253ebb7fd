"""Neyman-Pearson detection of the watermark from the correlation coefficient.

The densities of rho under H0 (no matching watermark) and H1 (matching
watermark) have no closed form, so they are estimated by Monte Carlo:
:func:`calibrate` runs the watermark pipeline many times, and
:func:`build_empirical_pdf` turns each sample into a Gaussian kernel
density estimate on a fixed grid over [-1, 1]. :func:`np_threshold` then
solves

    integral over {x : L(x) > gamma} of p(x; H0) dx = P_FA,
    L(x) = p(x; H1) / p(x; H0)

for the likelihood-ratio threshold gamma by bisection.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .attacks import AttackSpec, apply_attack
from .dwt2d import dwt2, idwt2
from .errors import CalibrationError, DegenerateError, InsufficientDataError
from .filterbank import standard_wavelet
from .watermark import (
    ALL_SUBBANDS,
    DEFAULT_ALPHA,
    EmbeddingParams,
    correlate_or_zero,
    embed_subbands,
    estimate_from_subbands,
    generate_watermark,
    parse_mask,
    trial_seed,
)

log = logging.getLogger(__name__)

GRID_POINTS = 2048
MIN_SAMPLES = 30
LR_FLOOR = 1e-12
GAMMA_RANGE = (1e-6, 1e6)
BISECTION_ITERATIONS = 60
PFA_TOLERANCE = 1e-4

H0 = "H0"
H1 = "H1"

# stream tags for trial_seed
STREAM_EMBED = 1
STREAM_WRONG = 2


@dataclass(frozen=True, eq=False)
class EmpiricalPdf:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n_samples: int
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        for name in ("grid", "density"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.grid.shape != self.density.shape:
            raise ValueError("grid and density lengths differ")
        if np.any(self.density < 0):
            raise ValueError("density must be non-negative")

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def __call__(self, x):
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    def cdf(self) -> np.ndarray:
        d, x = self.density, self.grid
        steps = 0.5 * (d[1:] + d[:-1]) * np.diff(x)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def quantile(self, q: float) -> float:
        c = self.cdf()
        c = c / c[-1]
        # first grid cell where the cdf reaches q, then interpolate inside it
        i = int(np.searchsorted(c, q, side="left"))
        if i <= 0:
            return float(self.grid[0])
        if i >= len(c):
            return float(self.grid[-1])
        c0, c1 = c[i - 1], c[i]
        t = 0.0 if c1 == c0 else (q - c0) / (c1 - c0)
        return float(self.grid[i - 1] + t * (self.grid[i] - self.grid[i - 1]))

    def moments(self) -> tuple[float, float]:
        m = float(np.trapezoid(self.grid * self.density, self.grid))
        v = float(np.trapezoid((self.grid - m) ** 2 * self.density, self.grid))
        return m, float(np.sqrt(max(v, 0.0)))


def default_grid(n=GRID_POINTS) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n)


def normal_reference_bandwidth(samples) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    return 1.06 * float(np.std(samples, ddof=1)) * len(samples) ** (-0.2)


def _kde_exact(samples, grid, h):
    dens = np.zeros_like(grid)
    for chunk in np.array_split(samples, max(1, len(samples) // 2048)):
        z = (grid[None, :] - chunk[:, None]) / h
        dens += np.exp(-0.5 * z * z).sum(axis=0)
    return dens


def _kde_binned(samples, grid, h):
    """Linear binning onto ``grid`` followed by direct kernel convolution."""
    step = grid[1] - grid[0]
    pos = (samples - grid[0]) / step
    left = np.floor(pos).astype(np.int64)
    frac = pos - left
    counts = np.zeros(len(grid) + 2)
    np.add.at(counts, np.clip(left, -1, len(grid)) + 1, 1.0 - frac)
    np.add.at(counts, np.clip(left + 1, -1, len(grid)) + 1, frac)
    counts = counts[1:-1]
    half = int(np.ceil(8.0 * h / step))
    offsets = np.arange(-half, half + 1) * step / h
    kernel = np.exp(-0.5 * offsets * offsets)
    return np.convolve(counts, kernel, mode="full")[half : half + len(grid)]


def build_empirical_pdf(samples, grid=None, bandwidth=None) -> EmpiricalPdf:
    """Gaussian KDE of ``samples`` on a uniform grid over [-1, 1].

    Bandwidth defaults to the normal reference rule 1.06 sigma n^(-1/5).
    The density is renormalized so its trapezoidal integral is 1.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < MIN_SAMPLES:
        raise InsufficientDataError(
            f"need at least {MIN_SAMPLES} samples for a density, got {samples.size}"
        )
    sd = float(np.std(samples, ddof=1))
    if not sd > 0:
        raise DegenerateError("samples have zero variance")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    h = normal_reference_bandwidth(samples) if bandwidth is None else float(bandwidth)
    step = grid[1] - grid[0]
    if samples.size * grid.size <= 2e7 or h < 2 * step:
        dens = _kde_exact(samples, grid, h)
    else:
        dens = _kde_binned(samples, grid, h)
    dens = np.maximum(dens, 0.0)
    area = np.trapezoid(dens, grid)
    if not area > 0:
        raise DegenerateError("kernel density has no mass on the grid")
    return EmpiricalPdf(
        grid, dens / area, h, int(samples.size), float(np.mean(samples)), sd
    )


def likelihood_ratio(pdf_h0: EmpiricalPdf, pdf_h1: EmpiricalPdf, x=None):
    """L = p1 / max(p0, floor) on the grid, or interpolated at ``x``.

    Beyond the modes the ratio is made monotone: non-decreasing to the
    right of the H1 mode and non-increasing to the left of the H0 mode.
    Without this, both densities underflow far in the tails and L drops
    to 0, so a perfect match (rho = 1) would be ruled H0.
    """
    lr = pdf_h1.density / np.maximum(pdf_h0.density, LR_FLOOR)
    i0 = int(np.argmax(pdf_h0.density))
    i1 = int(np.argmax(pdf_h1.density))
    if i1 >= i0:
        lr[i1:] = np.maximum.accumulate(lr[i1:])
        lr[: i0 + 1] = np.minimum.accumulate(lr[: i0 + 1][::-1])[::-1]
    if x is None:
        return lr
    return np.interp(x, pdf_h0.grid, lr)


def false_alarm_integral(grid, p0, lr, gamma) -> float:
    """Integral of p0 over {x : L(x) > gamma}, L linear within grid cells.

    Partial cells contribute the exact integral of the linear p0 over the
    sub-interval where the interpolated L exceeds gamma, so the result is
    continuous and non-increasing in gamma.
    """
    x0, x1 = grid[:-1], grid[1:]
    a0, a1 = p0[:-1], p0[1:]
    l0, l1 = lr[:-1], lr[1:]
    width = x1 - x0
    above0 = l0 > gamma
    above1 = l1 > gamma
    total = float(np.sum(0.5 * (a0 + a1)[above0 & above1] * width[above0 & above1]))
    part = above0 ^ above1
    if np.any(part):
        l0p, l1p, a0p, a1p, wp = l0[part], l1[part], a0[part], a1[part], width[part]
        # crossing point t in [0, 1] along the cell
        t = (gamma - l0p) / (l1p - l0p)
        dens_t = a0p + t * (a1p - a0p)
        # above on the right: [t, 1]; above on the left: [0, t]
        right = above1[part]
        seg_right = 0.5 * (dens_t + a1p) * (1.0 - t) * wp
        seg_left = 0.5 * (a0p + dens_t) * t * wp
        total += float(np.sum(np.where(right, seg_right, seg_left)))
    return total


@dataclass(frozen=True)
class Threshold:
    gamma: float
    rho_threshold: float
    achieved_pfa: float
    converged: bool


def np_threshold(pdf_h0: EmpiricalPdf, pdf_h1: EmpiricalPdf, pfa: float) -> Threshold:
    """Likelihood-ratio threshold gamma achieving false-alarm rate ``pfa``.

    Also returns the (1 - pfa) quantile of the H0 density, which is the
    equivalent threshold on rho when the likelihood ratio is monotone.
    """
    if not 0 < pfa <= 0.5:
        raise ValueError(f"pfa must be in (0, 0.5], got {pfa}")
    if not np.array_equal(pdf_h0.grid, pdf_h1.grid):
        raise ValueError("H0 and H1 densities must share a grid")
    grid, p0 = pdf_h0.grid, pdf_h0.density
    lr = likelihood_ratio(pdf_h0, pdf_h1)
    lo, hi = np.log(GAMMA_RANGE[0]), np.log(GAMMA_RANGE[1])
    gamma = float(np.exp(0.5 * (lo + hi)))
    achieved = false_alarm_integral(grid, p0, lr, gamma)
    converged = False
    for _ in range(BISECTION_ITERATIONS):
        mid = 0.5 * (lo + hi)
        gamma = float(np.exp(mid))
        achieved = false_alarm_integral(grid, p0, lr, gamma)
        if abs(achieved - pfa) <= PFA_TOLERANCE:
            converged = True
            break
        if achieved > pfa:
            lo = mid
        else:
            hi = mid
    if not converged:
        log.warning(
            "false-alarm target %.4g not reached: achieved %.4g at gamma %.6g "
            "(densities barely overlap)", pfa, achieved, gamma,
        )
    return Threshold(gamma, pdf_h0.quantile(1.0 - pfa), achieved, converged)


@dataclass(frozen=True, eq=False)
class DetectorModel:
    pdf_h0: EmpiricalPdf
    pdf_h1: EmpiricalPdf
    gamma: float
    rho_threshold: float
    target_pfa: float
    achieved_pfa: float = float("nan")
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.target_pfa < 1:
            raise ValueError("target_pfa must lie in (0, 1)")

    def to_csv(self) -> str:
        return model_to_csv(self)


@dataclass(frozen=True)
class Decision:
    hypothesis: str
    likelihood_ratio: float
    rho: float
    rho_decision: str

    @property
    def detected(self) -> bool:
        return self.hypothesis == H1


def decide(rho0: float, model: DetectorModel) -> Decision:
    """Decide H1 iff L(rho0) > gamma (ties go to H0)."""
    if not -1.0 <= rho0 <= 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho0}")
    lr = float(likelihood_ratio(model.pdf_h0, model.pdf_h1, rho0))
    return Decision(
        hypothesis=H1 if lr > model.gamma else H0,
        likelihood_ratio=lr,
        rho=float(rho0),
        rho_decision=H1 if rho0 > model.rho_threshold else H0,
    )


# --- Lilliefors -------------------------------------------------------------

# 5% critical values of the Lilliefors statistic (Monte Carlo tables).
_LILLIEFORS_N = np.array([4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 25, 30, 40, 50])
_LILLIEFORS_5PCT = np.array([
    0.3752, 0.3431, 0.3234, 0.3042, 0.2880, 0.2742, 0.2620, 0.2514, 0.2419,
    0.2335, 0.2259, 0.2189, 0.2126, 0.2068, 0.2015, 0.1965, 0.1919, 0.1730,
    0.1588, 0.1385, 0.1244,
])


def lilliefors_critical_value(n: int) -> float:
    if n < 5:
        raise InsufficientDataError(f"Lilliefors test needs n >= 5, got {n}")
    if n > 50:
        return float(0.886 / np.sqrt(n))
    # interpolate linearly in 1/sqrt(n) between tabulated sizes
    return float(np.interp(1 / np.sqrt(n), 1 / np.sqrt(_LILLIEFORS_N[::-1]), _LILLIEFORS_5PCT[::-1]))


@dataclass(frozen=True)
class LillieforsResult:
    statistic: float
    critical_value: float
    reject_at_5pct: bool


def lilliefors(samples) -> LillieforsResult:
    """Kolmogorov-Smirnov normality test with estimated mean and variance."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n < 5:
        raise InsufficientDataError(f"Lilliefors test needs n >= 5, got {n}")
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        raise DegenerateError("samples have zero variance")
    f = norm.cdf((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    crit = lilliefors_critical_value(n)
    return LillieforsResult(d, crit, bool(d > crit))


# --- calibration --------------------------------------------------------------


@dataclass(frozen=True)
class Context:
    wavelet: str
    attack: AttackSpec
    alpha: float = DEFAULT_ALPHA
    mask: tuple = ALL_SUBBANDS

    def as_dict(self) -> dict:
        return {
            "wavelet": self.wavelet,
            "attack": self.attack.kind,
            "strength": self.attack.strength,
            "alpha": self.alpha,
            "mask": ",".join(parse_mask(self.mask)),
        }


def is_zero_watermark_trial(t: int, zero_fraction: float) -> bool:
    """True when trial ``t`` is a W = 0 (unwatermarked) H0 trial.

    Spreads ``zero_fraction`` of the trials evenly; 0.5 alternates.
    """
    return np.floor((t + 1) * zero_fraction) > np.floor(t * zero_fraction)


@dataclass(frozen=True)
class TrialSamples:
    """rho values collected by :func:`simulate`, ordered by (trial, image)."""

    h1: np.ndarray
    h0: np.ndarray
    per_band: dict


class Pipeline:
    """Embed/attack/estimate loop for one context on a fixed image set.

    Per-image transforms of the originals and their unwatermarked
    attacked versions are cached.
    """

    def __init__(self, context: Context, images):
        self.context = context
        self.params = EmbeddingParams(context.alpha, context.wavelet, context.mask)
        self.spec = standard_wavelet(context.wavelet)
        self.images = list(images)
        if not self.images:
            raise ValueError("image set must not be empty")
        self._x = [dwt2(img, self.spec) for img in self.images]
        self._null = [None] * len(self.images)

    def watermarked_estimate(self, i, message):
        img, x = self.images[i], self._x[i]
        y = embed_subbands(x, message, self.params.alpha, self.params.subband_mask)
        attacked = apply_attack(idwt2(y, self.spec), self.context.attack)
        return estimate_from_subbands(dwt2(attacked, self.spec), x, self.params.alpha, self.params.subband_mask)

    def null_estimate(self, i):
        if self._null[i] is None:
            attacked = apply_attack(self.images[i], self.context.attack)
            self._null[i] = estimate_from_subbands(
                dwt2(attacked, self.spec), self._x[i], self.params.alpha, self.params.subband_mask
            )
        return self._null[i]

    def message(self, seed, i):
        img = self.images[i]
        return generate_watermark(seed, img.rows, img.cols, self.params.subband_mask)


def simulate(pipeline: Pipeline, trials: int, seed: int, zero_fraction: float = 0.5,
             bands=False, h0=True) -> TrialSamples:
    """Run ``trials`` rounds over every image and collect rho samples.

    H1: rho between the embedded message and its estimate. H0: rho of an
    independent message against the estimate of a watermarked image, or,
    on W = 0 trials, against the estimate from the unwatermarked image.
    """
    h1, h0s = [], []
    per_band = {b: [] for b in pipeline.params.subband_mask} if bands else {}
    for t in range(trials):
        s_true = trial_seed(seed, STREAM_EMBED, t)
        s_wrong = trial_seed(seed, STREAM_WRONG, t)
        zero = is_zero_watermark_trial(t, zero_fraction)
        for i in range(len(pipeline.images)):
            wm = pipeline.message(s_true, i)
            est = pipeline.watermarked_estimate(i, wm.message)
            h1.append(correlate_or_zero(wm, est))
            for b in per_band:
                per_band[b].append(correlate_or_zero(wm, est, b))
            if h0:
                wrong = pipeline.message(s_wrong, i)
                if zero:
                    h0s.append(correlate_or_zero(wrong, pipeline.null_estimate(i)))
                else:
                    h0s.append(correlate_or_zero(wrong, est))
    return TrialSamples(
        np.array(h1), np.array(h0s), {b: np.array(v) for b, v in per_band.items()}
    )


@dataclass(frozen=True, eq=False)
class Calibration:
    model: DetectorModel
    samples: TrialSamples
    lilliefors: LillieforsResult


def calibrate(context: Context, images, trials: int = 300, pfa: float = 0.01,
              seed: int = 0, zero_fraction: float = 0.5) -> Calibration:
    """Estimate both densities of rho by simulation and fit the detector."""
    if trials < MIN_SAMPLES:
        raise InsufficientDataError(f"calibration needs >= {MIN_SAMPLES} trials, got {trials}")
    pipeline = Pipeline(context, images)
    samples = simulate(pipeline, trials, seed, zero_fraction)
    try:
        pdf_h0 = build_empirical_pdf(samples.h0)
        pdf_h1 = build_empirical_pdf(samples.h1)
    except (DegenerateError, InsufficientDataError) as exc:
        raise CalibrationError(f"cannot build densities for {context}: {exc}") from exc
    thr = np_threshold(pdf_h0, pdf_h1, pfa)
    normality = lilliefors(samples.h0)
    ctx = context.as_dict()
    ctx.update({"trials": trials, "images": len(pipeline.images), "seed": seed,
                "zero_fraction": zero_fraction})
    model = DetectorModel(pdf_h0, pdf_h1, thr.gamma, thr.rho_threshold, pfa, thr.achieved_pfa, ctx)
    return Calibration(model, samples, normality)


# --- serialization ------------------------------------------------------------


def model_to_csv(model: DetectorModel) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["section", "metadata"])
    w.writerow(["key", "value"])
    meta = dict(model.context)
    meta.update({
        "gamma": repr(float(model.gamma)),
        "rho_threshold": repr(float(model.rho_threshold)),
        "target_pfa": repr(float(model.target_pfa)),
        "achieved_pfa": repr(float(model.achieved_pfa)),
        "bandwidth_h0": repr(model.pdf_h0.bandwidth),
        "bandwidth_h1": repr(model.pdf_h1.bandwidth),
        "n_h0": model.pdf_h0.n_samples,
        "n_h1": model.pdf_h1.n_samples,
        "mean_h0": repr(model.pdf_h0.mean),
        "std_h0": repr(model.pdf_h0.std),
        "mean_h1": repr(model.pdf_h1.mean),
        "std_h1": repr(model.pdf_h1.std),
    })
    for k, v in meta.items():
        w.writerow([k, v])
    w.writerow(["section", "grid"])
    w.writerow(["rho", "density_h0", "density_h1"])
    for x, a, b in zip(model.pdf_h0.grid, model.pdf_h0.density, model.pdf_h1.density):
        w.writerow([repr(float(x)), repr(float(a)), repr(float(b))])
    return out.getvalue()


_FLOAT_KEYS = {"gamma", "rho_threshold", "target_pfa", "achieved_pfa", "bandwidth_h0",
               "bandwidth_h1", "mean_h0", "std_h0", "mean_h1", "std_h1"}


def model_from_csv(text: str) -> DetectorModel:
    rows = list(csv.reader(io.StringIO(text)))
    meta, grid = {}, []
    section = None
    for row in rows:
        if not row:
            continue
        if row[0] == "section":
            section = row[1]
            continue
        if row[0] in ("key", "rho"):
            continue
        if section == "metadata":
            meta[row[0]] = row[1]
        elif section == "grid":
            grid.append([float(v) for v in row])
    if not grid or "gamma" not in meta:
        raise ValueError("not a detector model file")
    g = np.array(grid)
    nums = {k: float(meta.pop(k)) for k in list(meta) if k in _FLOAT_KEYS}
    n0 = int(meta.pop("n_h0"))
    n1 = int(meta.pop("n_h1"))
    pdf0 = EmpiricalPdf(g[:, 0], g[:, 1], nums["bandwidth_h0"], n0, nums["mean_h0"], nums["std_h0"])
    pdf1 = EmpiricalPdf(g[:, 0], g[:, 2], nums["bandwidth_h1"], n1, nums["mean_h1"], nums["std_h1"])
    return DetectorModel(pdf0, pdf1, nums["gamma"], nums["rho_threshold"], nums["target_pfa"],
                         nums["achieved_pfa"], meta)


def model_context(model: DetectorModel) -> Context:
    c = model.context
    kind = c["attack"]
    strength = c.get("strength", "")
    attack = AttackSpec(kind, quality=int(float(strength)) if kind == "jpeg" else None,
                        bitrate=float(strength) if kind == "jpeg2000" else None)
    return Context(c["wavelet"], attack, float(c.get("alpha", DEFAULT_ALPHA)),
                   parse_mask(c.get("mask", "all")))
