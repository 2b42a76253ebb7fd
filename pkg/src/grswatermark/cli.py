"""Command line interface: ``grswatermark <subcommand> ...``.

Exit status is 0 on success, 1 for invalid input or configuration and 2
when a computation fails at run time. Reports go to stdout as CSV.
"""

from __future__ import annotations

import argparse
import csv
import logging
import shlex
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackSpec, apply_attack
from .detector import (
    Context,
    calibrate,
    decide,
    model_context,
    model_from_csv,
    model_to_csv,
)
from .dwt2d import SUBBANDS, dwt2, subbands_to_raw
from .errors import ConfigError, WatermarkError
from .filterbank import STANDARD_NAMES, standard_wavelet, verify_perfect_reconstruction
from .harness import PGM_SUFFIXES, RATES_HEADER, estimate_rates, load_config, run_experiment
from .image_io import Image, load, quantize, rescale_for_view, save
from .metrics import TABLE_LABELS, jsd_table, uqi
from .watermark import (
    DEFAULT_ALPHA,
    EmbeddingParams,
    correlate_or_zero,
    embed,
    estimate_watermark,
    generate_watermark,
    parse_mask,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

log = logging.getLogger("grswatermark")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _writer(out=None):
    return csv.writer(out or sys.stdout, lineterminator="\n")


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def _wavelet(name):
    try:
        return standard_wavelet(name)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc


def _attack_from_args(args) -> AttackSpec:
    if args.kind == "jpeg":
        if args.q is None:
            raise ConfigError("--q is required for the jpeg attack")
        return AttackSpec("jpeg", quality=args.q)
    if args.kind == "jpeg2000":
        if args.bpp is None:
            raise ConfigError("--bpp is required for the jpeg2000 attack")
        return AttackSpec("jpeg2000", bitrate=args.bpp)
    return AttackSpec("none")


def _image_paths(spec: list[str]) -> list[Path]:
    paths = []
    for item in spec:
        p = Path(item)
        if p.is_dir():
            paths += sorted(q for q in p.iterdir() if q.suffix.lower() in PGM_SUFFIXES)
        elif p.is_file():
            paths.append(p)
        else:
            raise ConfigError(f"image path not found: {item}")
    if not paths:
        raise ConfigError("no PGM images found")
    return paths


# --- subcommands ------------------------------------------------------------------


def cmd_dump_filters(args):
    names = args.wavelet or list(STANDARD_NAMES)
    w = _writer()
    w.writerow(["wavelet", "kind", "filter", "index", "value"])
    for name in names:
        spec = _wavelet(name)
        for f in ("h0", "h1", "g0", "g1"):
            for i, c in enumerate(getattr(spec, f)):
                w.writerow([name, spec.kind, f, i, _fmt(c)])
        w.writerow([name, spec.kind, "pr_residual", "", _fmt(verify_perfect_reconstruction(spec))])
    return EXIT_OK


def cmd_dwt(args):
    spec = _wavelet(args.wavelet)
    sb = dwt2(load(args.input), spec)
    prefix = Path(args.prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for b in SUBBANDS:
        save(rescale_for_view(sb.band(b)), f"{prefix}_{b}.pgm")
    Path(f"{prefix}.raw").write_bytes(subbands_to_raw(sb))
    return EXIT_OK


def cmd_embed(args):
    img = load(args.input)
    params = EmbeddingParams(args.alpha, args.wavelet, parse_mask(args.subbands))
    wm = generate_watermark(args.seed, img.rows, img.cols, params.subband_mask)
    save(quantize(embed(img, wm, params, _wavelet(args.wavelet))), args.output)
    return EXIT_OK


def external_attack(img: Image, command: str) -> Image:
    """Round-trip ``img`` through a user codec: ``command`` has {in} and {out}."""
    if "{in}" not in command or "{out}" not in command:
        raise ConfigError("--external-cmd must contain {in} and {out} placeholders")
    with tempfile.TemporaryDirectory() as tmp:
        src, dst = Path(tmp) / "in.pgm", Path(tmp) / "out.pgm"
        save(img, src)
        argv = [a.replace("{in}", str(src)).replace("{out}", str(dst)) for a in shlex.split(command)]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(f"external codec failed ({proc.returncode}): {proc.stderr.strip()}")
        out = load(dst)
    if out.shape != img.shape:
        raise RuntimeError(f"external codec changed the image size {img.shape} -> {out.shape}")
    return out


def cmd_attack(args):
    img = load(args.input)
    if args.external_cmd:
        out = external_attack(img, args.external_cmd)
    else:
        out = apply_attack(img, _attack_from_args(args))
    save(out, args.output)
    return EXIT_OK


def cmd_detect(args):
    original = load(args.original)
    suspect = load(args.suspect)
    model = model_from_csv(Path(args.model).read_text()) if args.model else None
    if model is not None:
        ctx = model_context(model)
        wavelet, alpha, mask = ctx.wavelet, ctx.alpha, ctx.mask
    else:
        wavelet, alpha, mask = args.wavelet, args.alpha, parse_mask(args.subbands)
    params = EmbeddingParams(alpha, wavelet, mask)
    wm = generate_watermark(args.seed, original.rows, original.cols, mask)
    est = estimate_watermark(suspect, original, params, _wavelet(wavelet))
    rho = correlate_or_zero(wm, est)
    w = _writer()
    w.writerow(["band", "rho"])
    w.writerow(["all", _fmt(rho)])
    for b in mask:
        w.writerow([b, _fmt(correlate_or_zero(wm, est, b))])
    if model is not None:
        d = decide(rho, model)
        w.writerow(["decision", d.hypothesis])
        w.writerow(["likelihood_ratio", _fmt(d.likelihood_ratio)])
        w.writerow(["gamma", _fmt(model.gamma)])
    return EXIT_OK


def cmd_metrics(args):
    w = _writer()
    if args.uqi:
        a, b = (load(p) for p in args.uqi)
        w.writerow(["metric", "value"])
        w.writerow(["uqi", _fmt(uqi(a, b, stride=args.stride))])
    if args.jsd_table:
        table = jsd_table(load(args.jsd_table), _wavelet(args.wavelet))
        w.writerow([""] + list(TABLE_LABELS))
        for label, row in zip(TABLE_LABELS, table):
            w.writerow([label] + [_fmt(v) for v in row])
    if not args.uqi and not args.jsd_table:
        raise ConfigError("metrics needs --uqi A B and/or --jsd-table IMG")
    return EXIT_OK


def cmd_calibrate(args):
    _wavelet(args.wavelet)
    images = [load(p) for p in _image_paths(args.images)]
    ctx = Context(args.wavelet, _attack_from_args(args), args.alpha, parse_mask(args.subbands))
    cal = calibrate(ctx, images, args.trials, args.pfa, args.seed, args.zero_fraction)
    text = model_to_csv(cal.model)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    m, lf = cal.model, cal.lilliefors
    print(
        f"gamma={m.gamma:.6g} rho_threshold={m.rho_threshold:.6g} "
        f"achieved_pfa={m.achieved_pfa:.6g} lilliefors={lf.statistic:.4f}"
        f"{' (normality rejected)' if lf.reject_at_5pct else ''}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_rates(args):
    model = model_from_csv(Path(args.model).read_text())
    images = [load(p) for p in _image_paths(args.images)]
    res = estimate_rates(model_context(model), model, images, args.trials, args.seed,
                         args.zero_fraction)
    w = _writer()
    w.writerow(RATES_HEADER)
    w.writerow(res.row())
    return EXIT_OK


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def cmd_experiment(args):
    overrides = _overrides(args.set)
    for key in ("output", "jobs", "seed"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.holdout:
        overrides["holdout"] = "true"
    if args.paper_scale:
        overrides.setdefault("calibration_trials", 300)
        overrides.setdefault("evaluation_trials", 8000)
        overrides.setdefault("subband_trials", 300)
    config = load_config(args.config, **overrides)
    report = run_experiment(config)
    for name in sorted(report.files):
        print(Path(config.output) / name)
    return EXIT_OK


# --- parser -------------------------------------------------------------------------


def _add_attack_args(p, required=False):
    p.add_argument("--kind", choices=["none", "jpeg", "jpeg2000"], default="none" if not required else None,
                   required=required)
    p.add_argument("--q", type=int, help="jpeg quality factor 1..100")
    p.add_argument("--bpp", type=float, help="jpeg2000 target bits per pixel")


def _add_embedding_args(p):
    p.add_argument("--wavelet", default="grs4")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--subbands", default="all", help="comma list of ll,lh,hl,hh, or all/high")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grswatermark", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dump-filters", help="print filter coefficients and PR residuals")
    p.add_argument("--wavelet", action="append")
    p.set_defaults(func=cmd_dump_filters)

    p = sub.add_parser("dwt", help="one-level 2-D DWT to four PGMs and a raw sidecar")
    p.add_argument("--wavelet", default="grs4")
    p.add_argument("input")
    p.add_argument("prefix", help="output prefix; writes PREFIX_ll.pgm ... and PREFIX.raw")
    p.set_defaults(func=cmd_dwt)

    p = sub.add_parser("embed", help="embed a seeded watermark")
    _add_embedding_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("attack", help="apply a compression attack")
    _add_attack_args(p)
    p.add_argument("--external-cmd", help='external codec, e.g. "codec {in} {out}"')
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("detect", help="correlate a suspect image with a seeded watermark")
    _add_embedding_args(p)
    p.add_argument("--original", required=True)
    p.add_argument("--suspect", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--model", help="detector model CSV; overrides wavelet/alpha/subbands")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("metrics", help="UQI or JSD table")
    p.add_argument("--uqi", nargs=2, metavar=("A", "B"))
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--jsd-table", metavar="IMG")
    p.add_argument("--wavelet", default="grs4")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("calibrate", help="fit a Neyman-Pearson detector by simulation")
    _add_embedding_args(p)
    p.add_argument("--attack", dest="kind", choices=["none", "jpeg", "jpeg2000"], default="none")
    p.add_argument("--q", type=int)
    p.add_argument("--bpp", type=float)
    p.add_argument("--trials", type=int, default=300)
    p.add_argument("--pfa", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zero-fraction", type=float, default=0.5)
    p.add_argument("--images", nargs="+", required=True, help="PGM files or directories")
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("rates", help="estimate p_D and p_FA with a calibrated model")
    p.add_argument("--model", required=True)
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--zero-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("experiment", help="run the full experiment grid")
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--output")
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--holdout", action="store_true")
    p.add_argument("--paper-scale", action="store_true",
                   help="300 calibration / 8000 evaluation trials")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (WatermarkError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
