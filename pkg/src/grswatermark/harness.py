"""End-to-end experiment grid with CSV reports.

Stages (each writes one or more CSV files into the output directory):

========================  ==================================================
``jsd_tables.csv``        JSD among each image and its subbands, per wavelet
``quality_sweep.csv``     mean UQI against watermark strength
``calibration.csv``       per (wavelet, attack) rho statistics and detector
``models/*.csv``          detector models used for rate estimation
``rates.csv``             detection / false alarm frequencies on holdout
``subbands.csv``          per-trial, per-subband rho samples
``subband_summary.csv``   box-plot statistics of the above
``manifest.txt``          configuration echo, seeds, versions, wall times
========================  ==================================================

All randomness derives from the master seed, a stage tag and the trial
index, so a configuration re-run reproduces every CSV byte for byte.
"""

from __future__ import annotations

import csv
import io
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import __version__, fixtures
from .attacks import AttackSpec
from .detector import (
    Context,
    DetectorModel,
    Pipeline,
    calibrate,
    likelihood_ratio,
    model_from_csv,
    model_to_csv,
    simulate,
)
from .errors import ConfigError, WatermarkError
from .filterbank import STANDARD_NAMES, standard_wavelet
from .image_io import Image, load, quantize
from .metrics import TABLE_LABELS, jsd_table, uqi
from .watermark import (
    ALL_SUBBANDS,
    HIGH_SUBBANDS,
    EmbeddingParams,
    embed,
    generate_watermark,
    mask_label,
    parse_mask,
    trial_seed,
)

log = logging.getLogger(__name__)

STAGE_SWEEP = 1
STAGE_CALIBRATION = 2
STAGE_RATES = 3
STAGE_SUBBANDS = 4

FIXTURE_PREFIX = "fixture:"


def _split(value, cast=str):
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return tuple(cast(v.strip()) for v in str(value).split(",") if v.strip())


PGM_SUFFIXES = (".pgm", ".pnm")


def _image_refs(value):
    """Split a path list, expanding directories to their sorted PGM files."""
    refs = []
    for ref in _split(value):
        p = Path(ref)
        if not ref.startswith(FIXTURE_PREFIX) and p.is_dir():
            refs += sorted(str(q) for q in p.iterdir() if q.suffix.lower() in PGM_SUFFIXES)
        else:
            refs.append(ref)
    return tuple(refs)


def _bool(value):
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def parse_attacks(text) -> tuple[AttackSpec, ...]:
    """``"jpeg:10,90;jpeg2000:0.25,2"`` -> attack specs (``none`` allowed)."""
    if isinstance(text, (list, tuple)):
        return tuple(text)
    out = []
    for group in str(text).split(";"):
        group = group.strip()
        if not group:
            continue
        kind, _, values = group.partition(":")
        kind = kind.strip().lower()
        if kind == "none":
            out.append(AttackSpec("none"))
            continue
        for v in _split(values):
            if kind in ("jpeg", "jpeg_like"):
                out.append(AttackSpec("jpeg", quality=int(v)))
            elif kind in ("jpeg2000", "jpeg2000_like", "j2k"):
                out.append(AttackSpec("jpeg2000", bitrate=float(v)))
            else:
                raise ConfigError(f"unknown attack kind {kind!r}")
    return tuple(out)


def format_attacks(attacks) -> str:
    groups = {}
    for a in attacks:
        groups.setdefault(a.kind, []).append(f"{a.strength:g}" if a.kind != "none" else "")
    return ";".join(k if k == "none" else f"{k}:{','.join(v)}" for k, v in groups.items())


@dataclass
class ExperimentConfig:
    images: tuple = tuple(FIXTURE_PREFIX + n for n in fixtures.NAMES[:2])
    holdout_images: tuple = tuple(FIXTURE_PREFIX + n for n in fixtures.NAMES[2:])
    holdout: bool = True
    wavelets: tuple = STANDARD_NAMES
    attacks: tuple = parse_attacks("jpeg:10,30,50,70,90;jpeg2000:0.25,0.5,1,2")
    rate_wavelets: tuple = ("grs4",)
    rate_attacks: tuple = parse_attacks("jpeg:10;jpeg2000:0.25")
    subband_attacks: tuple = parse_attacks("jpeg:10;jpeg2000:0.25")
    alpha: float = 3.0
    mask: tuple = ALL_SUBBANDS
    alphas: tuple = (0.5, 1.0, 2.0, 3.0, 3.5, 5.0)
    calibration_trials: int = 100
    evaluation_trials: int = 1000
    subband_trials: int = 100
    seed: int = 2024
    pfa: float = 0.01
    zero_fraction: float = 0.5
    uqi_stride: int = 1
    output: str = "results"
    jobs: int = 1
    stages: tuple = ("jsd", "sweep", "calibration", "rates", "subbands")

    _CASTS = {
        "images": _image_refs,
        "holdout_images": _image_refs,
        "holdout": _bool,
        "wavelets": _split,
        "attacks": parse_attacks,
        "rate_wavelets": _split,
        "rate_attacks": parse_attacks,
        "subband_attacks": parse_attacks,
        "alpha": float,
        "mask": parse_mask,
        "alphas": lambda v: _split(v, float),
        "calibration_trials": int,
        "evaluation_trials": int,
        "subband_trials": int,
        "seed": int,
        "pfa": float,
        "zero_fraction": float,
        "uqi_stride": int,
        "output": str,
        "jobs": int,
        "stages": _split,
    }

    def updated(self, **overrides) -> ExperimentConfig:
        values = {}
        for key, raw in overrides.items():
            key = key.replace("-", "_")
            if key not in self._CASTS:
                raise ConfigError(f"unknown configuration key {key!r}")
            try:
                values[key] = self._CASTS[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
        return replace(self, **values)

    def echo(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("attacks", "rate_attacks", "subband_attacks"):
                v = format_attacks(v)
            elif isinstance(v, tuple):
                v = ",".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig().updated(**values)


def resolve_image(ref: str) -> Image:
    if ref.startswith(FIXTURE_PREFIX):
        name = ref[len(FIXTURE_PREFIX):]
        if name not in fixtures.NAMES:
            raise ConfigError(f"unknown fixture {name!r}; available: {', '.join(fixtures.NAMES)}")
        return fixtures.load_fixture(name)
    return load(ref)


def validate(config: ExperimentConfig) -> None:
    """Fail fast on anything that would break a later stage."""
    if not config.images:
        raise ConfigError("no images configured")
    for ref in config.images + config.holdout_images:
        if ref.startswith(FIXTURE_PREFIX):
            resolve_image(ref)
        elif not Path(ref).is_file():
            raise ConfigError(f"image not found: {ref}")
    if config.holdout:
        overlap = set(map(_canonical, config.images)) & set(map(_canonical, config.holdout_images))
        if overlap:
            raise ConfigError(f"holdout images overlap calibration images: {sorted(overlap)}")
    for name in config.wavelets + config.rate_wavelets:
        try:
            standard_wavelet(name)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from exc
    if config.calibration_trials < 30:
        raise ConfigError("calibration_trials must be >= 30")
    if not 0 < config.pfa <= 0.5:
        raise ConfigError("pfa must be in (0, 0.5]")
    if not 0 <= config.zero_fraction <= 1:
        raise ConfigError("zero_fraction must be in [0, 1]")
    if not config.alpha > 0:
        raise ConfigError("alpha must be positive")
    if any(a < 0 for a in config.alphas) or list(config.alphas) != sorted(config.alphas):
        raise ConfigError("alphas must be non-negative and ascending")
    unknown = set(config.stages) - {"jsd", "sweep", "calibration", "rates", "subbands"}
    if unknown:
        raise ConfigError(f"unknown stage(s): {sorted(unknown)}")


def _canonical(ref):
    return ref if ref.startswith(FIXTURE_PREFIX) else str(Path(ref).resolve())


def load_images(refs) -> list[Image]:
    return [resolve_image(r) for r in refs]


def _csv_text(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.10g}"
    return str(x)


def _row(*values):
    return [_fmt(v) for v in values]


def _map(func, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


# --- JSD tables -----------------------------------------------------------------

JSD_HEADER = ["image", "wavelet", "row"] + list(TABLE_LABELS)


def jsd_report(images: dict[str, Image], wavelets) -> str:
    rows = []
    for wname in wavelets:
        spec = standard_wavelet(wname)
        tables = []
        for label, img in images.items():
            t = jsd_table(img, spec)
            tables.append(t)
            rows += [_row(label, wname, TABLE_LABELS[i], *t[i]) for i in range(len(t))]
        mean = np.mean(tables, axis=0)
        rows += [_row("mean", wname, TABLE_LABELS[i], *mean[i]) for i in range(len(mean))]
    return _csv_text(JSD_HEADER, rows)


# --- quality sweep ----------------------------------------------------------------

SWEEP_HEADER = ["wavelet", "mask", "alpha", "mean_uqi", "images"]


@dataclass(frozen=True)
class SweepPoint:
    wavelet: str
    mask: str
    alpha: float
    mean_uqi: float


def quality_sweep(images, wavelets, alphas, seed=0, masks=(ALL_SUBBANDS, HIGH_SUBBANDS),
                  stride=1) -> list[SweepPoint]:
    """Mean UQI between each image and its 8-bit watermarked version."""
    images = list(images)
    points = []
    for wname in wavelets:
        spec = standard_wavelet(wname)
        for mask in masks:
            mask = parse_mask(mask)
            for alpha in alphas:
                scores = []
                for i, img in enumerate(images):
                    if alpha == 0:
                        marked = quantize(img)
                    else:
                        wm = generate_watermark(trial_seed(seed, i), img.rows, img.cols, mask)
                        marked = quantize(embed(img, wm, EmbeddingParams(alpha, wname, mask), spec))
                    scores.append(uqi(img, marked, stride=stride))
                points.append(SweepPoint(wname, mask_label(mask), float(alpha), float(np.mean(scores))))
    return points


def sweep_report(points, n_images) -> str:
    return _csv_text(
        SWEEP_HEADER, [_row(p.wavelet, p.mask, p.alpha, p.mean_uqi, n_images) for p in points]
    )


# --- calibration grid -----------------------------------------------------------------

CALIBRATION_HEADER = [
    "wavelet", "attack", "strength", "trials", "images", "mean_h1", "std_h1", "mean_h0",
    "std_h0", "separation_se", "gamma", "rho_threshold", "achieved_pfa",
    "lilliefors_stat", "lilliefors_crit", "lilliefors_reject",
]


@dataclass(frozen=True)
class CellResult:
    wavelet: str
    attack: AttackSpec
    trials: int
    images: int
    mean_h1: float
    std_h1: float
    mean_h0: float
    std_h0: float
    separation_se: float
    gamma: float
    rho_threshold: float
    achieved_pfa: float
    lilliefors_stat: float
    lilliefors_crit: float
    lilliefors_reject: bool
    model_csv: str = field(default="", repr=False)

    def row(self):
        return _row(
            self.wavelet, self.attack.kind, self.attack.strength, self.trials, self.images,
            self.mean_h1, self.std_h1, self.mean_h0, self.std_h0, self.separation_se,
            self.gamma, self.rho_threshold, self.achieved_pfa, self.lilliefors_stat,
            self.lilliefors_crit, int(self.lilliefors_reject),
        )


def pooled_separation(h1, h0) -> float:
    """(mean H1 - mean H0) in units of the pooled standard error."""
    se = np.sqrt(np.var(h1, ddof=1) / len(h1) + np.var(h0, ddof=1) / len(h0))
    return float((np.mean(h1) - np.mean(h0)) / se) if se > 0 else float("inf")


def _calibrate_cell(job):
    wavelet, attack, refs, trials, pfa, seed, zero_fraction, alpha, mask = job
    images = load_images(refs)
    cal = calibrate(Context(wavelet, attack, alpha, mask), images, trials, pfa, seed, zero_fraction)
    h1, h0 = cal.samples.h1, cal.samples.h0
    m = cal.model
    return CellResult(
        wavelet, attack, trials, len(images), float(np.mean(h1)), float(np.std(h1, ddof=1)),
        float(np.mean(h0)), float(np.std(h0, ddof=1)), pooled_separation(h1, h0), m.gamma,
        m.rho_threshold, m.achieved_pfa, cal.lilliefors.statistic, cal.lilliefors.critical_value,
        bool(cal.lilliefors.reject_at_5pct), model_to_csv(m),
    )


def calibration_grid(config: ExperimentConfig, wavelets=None, attacks=None) -> list[CellResult]:
    seed = trial_seed(config.seed, STAGE_CALIBRATION)
    jobs = [
        (w, a, config.images, config.calibration_trials, config.pfa, seed,
         config.zero_fraction, config.alpha, config.mask)
        for w in (wavelets or config.wavelets)
        for a in (attacks or config.attacks)
    ]
    return _map(_calibrate_cell, jobs, config.jobs)


def calibration_report(cells) -> str:
    return _csv_text(CALIBRATION_HEADER, [c.row() for c in cells])


# --- rates ---------------------------------------------------------------------------

RATES_HEADER = [
    "wavelet", "attack", "strength", "trials", "images", "n_present", "detections", "p_d",
    "p_d_low", "p_d_high", "n_absent", "false_alarms", "p_fa", "p_fa_low", "p_fa_high",
]


@dataclass(frozen=True)
class RateResult:
    wavelet: str
    attack: AttackSpec
    trials: int
    images: int
    detections: int
    n_present: int
    false_alarms: int
    n_absent: int

    @property
    def p_d(self) -> float:
        return self.detections / self.n_present

    @property
    def p_fa(self) -> float:
        return self.false_alarms / self.n_absent

    def p_d_interval(self):
        return wilson_interval(self.detections, self.n_present)

    def p_fa_interval(self):
        return wilson_interval(self.false_alarms, self.n_absent)

    def row(self):
        return _row(
            self.wavelet, self.attack.kind, self.attack.strength, self.trials, self.images,
            self.n_present, self.detections, self.p_d, *self.p_d_interval(),
            self.n_absent, self.false_alarms, self.p_fa, *self.p_fa_interval(),
        )


def wilson_interval(successes: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    lo, hi = proportion_confint(successes, n, alpha=alpha, method="wilson")
    return float(lo), float(hi)


def estimate_rates(context: Context, model: DetectorModel, images, trials: int, seed: int,
                   zero_fraction: float = 0.5) -> RateResult:
    """Relative frequencies of detection and false alarm over fresh trials."""
    pipeline = Pipeline(context, images)
    samples = simulate(pipeline, trials, seed, zero_fraction)
    lr_h1 = likelihood_ratio(model.pdf_h0, model.pdf_h1, samples.h1)
    lr_h0 = likelihood_ratio(model.pdf_h0, model.pdf_h1, samples.h0)
    return RateResult(
        context.wavelet, context.attack, trials, len(pipeline.images),
        int(np.count_nonzero(lr_h1 > model.gamma)), len(samples.h1),
        int(np.count_nonzero(lr_h0 > model.gamma)), len(samples.h0),
    )


def _rate_cell(job):
    cell, refs, trials, seed, zero_fraction, alpha, mask = job
    ctx = Context(cell.wavelet, cell.attack, alpha, mask)
    model = model_from_csv(cell.model_csv)
    return estimate_rates(ctx, model, load_images(refs), trials, seed, zero_fraction)


def rates_report(results) -> str:
    return _csv_text(RATES_HEADER, [r.row() for r in results])


# --- per-subband analysis ------------------------------------------------------------

SUBBAND_HEADER = ["wavelet", "attack", "strength", "trial", "image", "band", "rho"]
SUBBAND_SUMMARY_HEADER = [
    "wavelet", "attack", "strength", "band", "n", "mean", "std", "q1", "median", "q3",
    "whisker_low", "whisker_high",
]


def box_stats(x) -> dict:
    """Quartiles and 1.5 IQR whiskers (clipped to the data range)."""
    x = np.asarray(x, dtype=np.float64)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    inside = x[(x >= q1 - 1.5 * iqr) & (x <= q3 + 1.5 * iqr)]
    return {
        "n": x.size, "mean": float(x.mean()), "std": float(x.std(ddof=1)) if x.size > 1 else 0.0,
        "q1": float(q1), "median": float(med), "q3": float(q3),
        "whisker_low": float(inside.min()), "whisker_high": float(inside.max()),
    }


@dataclass(frozen=True, eq=False)
class SubbandSamples:
    wavelet: str
    attack: AttackSpec
    trials: int
    n_images: int
    rho: dict  # band -> array ordered by (trial, image)

    def summary(self) -> dict:
        return {b: box_stats(v) for b, v in self.rho.items()}


def subband_samples(context: Context, images, trials: int, seed: int) -> SubbandSamples:
    pipeline = Pipeline(context, images)
    s = simulate(pipeline, trials, seed, bands=True, h0=False)
    return SubbandSamples(context.wavelet, context.attack, trials, len(pipeline.images), s.per_band)


def _subband_cell(job):
    wavelet, attack, refs, trials, seed, alpha = job
    return subband_samples(Context(wavelet, attack, alpha, ALL_SUBBANDS), load_images(refs), trials, seed)


def subband_reports(results, labels) -> tuple[str, str]:
    rows, summary = [], []
    for res in results:
        a = res.attack
        for band, values in res.rho.items():
            for k, v in enumerate(values):
                t, i = divmod(k, res.n_images)
                rows.append(_row(res.wavelet, a.kind, a.strength, t, labels[i], band, v))
        for band, st in res.summary().items():
            summary.append(_row(res.wavelet, a.kind, a.strength, band, *st.values()))
    return _csv_text(SUBBAND_HEADER, rows), _csv_text(SUBBAND_SUMMARY_HEADER, summary)


# --- orchestration --------------------------------------------------------------------


@dataclass
class Report:
    """In-memory report bundle: file name -> text."""

    files: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    calibration: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    sweep: list = field(default_factory=list)
    subbands: list = field(default_factory=list)


class StageError(WatermarkError, RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def _label(ref):
    return ref[len(FIXTURE_PREFIX):] if ref.startswith(FIXTURE_PREFIX) else Path(ref).stem


def _write(out_dir: Path, name: str, text: str):
    path = out_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run_experiment(config: ExperimentConfig, write: bool = True) -> Report:
    """Run every configured stage; outputs are written as each stage finishes."""
    validate(config)
    out_dir = Path(config.output)
    report = Report()
    images = {_label(r): img for r, img in zip(config.images, load_images(config.images))}
    labels = list(images)

    def stage(name, func):
        if name not in config.stages:
            return
        start = time.perf_counter()
        try:
            produced = func()
        except Exception as exc:
            raise StageError(name, exc) from exc
        report.timings[name] = time.perf_counter() - start
        for fname, text in produced.items():
            report.files[fname] = text
            if write:
                _write(out_dir, fname, text)

    def do_jsd():
        return {"jsd_tables.csv": jsd_report(images, config.wavelets)}

    def do_sweep():
        report.sweep = quality_sweep(
            images.values(), config.wavelets, config.alphas,
            seed=trial_seed(config.seed, STAGE_SWEEP), stride=config.uqi_stride,
        )
        return {"quality_sweep.csv": sweep_report(report.sweep, len(images))}

    def do_calibration():
        report.calibration = calibration_grid(config)
        return {"calibration.csv": calibration_report(report.calibration)}

    def do_rates():
        eval_refs = config.holdout_images or config.images
        cells = [c for c in report.calibration
                 if c.wavelet in config.rate_wavelets and c.attack in config.rate_attacks]
        missing = [(w, a) for w in config.rate_wavelets for a in config.rate_attacks
                   if not any(c.wavelet == w and c.attack == a for c in cells)]
        if missing:
            ws = tuple(dict.fromkeys(w for w, _ in missing))
            at = tuple(dict.fromkeys(a for _, a in missing))
            cells += [c for c in calibration_grid(config, ws, at)
                      if (c.wavelet, c.attack) in missing]
        seed = trial_seed(config.seed, STAGE_RATES)
        jobs = [(c, eval_refs, config.evaluation_trials, seed, config.zero_fraction,
                 config.alpha, config.mask) for c in cells]
        report.rates = _map(_rate_cell, jobs, config.jobs)
        files = {"rates.csv": rates_report(report.rates)}
        for c in cells:
            files[f"models/{c.wavelet}_{c.attack.label.replace('@', '_')}.csv"] = c.model_csv
        return files

    def do_subbands():
        seed = trial_seed(config.seed, STAGE_SUBBANDS)
        jobs = [(w, a, config.images, config.subband_trials, seed, config.alpha)
                for w in config.wavelets for a in config.subband_attacks]
        report.subbands = _map(_subband_cell, jobs, config.jobs)
        samples, summary = subband_reports(report.subbands, labels)
        return {"subbands.csv": samples, "subband_summary.csv": summary}

    stage("jsd", do_jsd)
    stage("sweep", do_sweep)
    stage("calibration", do_calibration)
    stage("rates", do_rates)
    stage("subbands", do_subbands)

    manifest = manifest_text(config, report)
    report.files["manifest.txt"] = manifest
    if write:
        _write(out_dir, "manifest.txt", manifest)
    return report


def manifest_text(config: ExperimentConfig, report: Report) -> str:
    import scipy

    lines = [
        "# grswatermark experiment manifest",
        f"package_version = {__version__}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"master_seed = {config.seed}",
        f"seed_sweep = {trial_seed(config.seed, STAGE_SWEEP)}",
        f"seed_calibration = {trial_seed(config.seed, STAGE_CALIBRATION)}",
        f"seed_rates = {trial_seed(config.seed, STAGE_RATES)}",
        f"seed_subbands = {trial_seed(config.seed, STAGE_SUBBANDS)}",
        "",
        "[config]",
        config.echo(),
        "[wall_time_seconds]",
    ]
    lines += [f"{k} = {v:.3f}" for k, v in report.timings.items()]
    lines += ["", "[files]"] + sorted(k for k in report.files if k != "manifest.txt")
    return "\n".join(lines) + "\n"
