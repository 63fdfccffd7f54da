"""Command line entry point: ``lenticolor <subcommand> ...``.

Exit status: 0 success, 1 one or more images failed, 2 bad configuration or usage.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import colorspace
from .detect import detect_ridges, estimate_width
from .errors import ConfigError, CorpusEmpty, LenticularError
from .extract import ExtractConfig, extract_stripes, median_filter_vertical, resample_vertical
from .fit import FitConfig, fit_grid
from .images import read_gray, read_rgb, write_rgb16
from .pipeline import (CONFIG_ENV, DEMOSAIC_METHODS, JobConfig, demosaic, load_config, overlay,
                       run_pipeline, run_simulate)
from .raster import StripeImage, read_grid, read_raster, write_grid, write_raster
from .simulate import SimParams

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
CHANNELS = "RGB"

log = logging.getLogger("lenticolor")


def _channel_order(s: str) -> tuple[int, int, int]:
    s = s.upper()
    if sorted(s) != sorted(CHANNELS):
        raise argparse.ArgumentTypeError(f"channel order must be a permutation of RGB, got {s!r}")
    return tuple(CHANNELS.index(c) for c in s)


def _stage_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("stage overrides")
    g.add_argument("--scale", type=float, help="detector scale in px")
    g.add_argument("--detector", choices=("model", "hessian"), help="detector response")
    g.add_argument("--lambda1", type=float, help="width regularizer weight")
    g.add_argument("--lambda2", type=float, help="straightness regularizer weight")
    g.add_argument("--max-iters", type=int)
    g.add_argument("--margin", type=float, help="band margin as a fraction of lenticule width")
    g.add_argument("--median-k", type=int, help="vertical median window (odd)")
    g.add_argument("--channel-order", type=_channel_order, help="left-to-right band order, e.g. RGB")
    g.add_argument("--resample-filter", choices=("nearest", "linear"))


def _job_config(args) -> JobConfig:
    d = load_config(getattr(args, "config", None))
    cfg = JobConfig.from_dict(d)
    fit = dataclasses.asdict(cfg.fit)
    ext = dataclasses.asdict(cfg.extract)
    for flag, key in (("lambda1", "lambda1"), ("lambda2", "lambda2"), ("max_iters", "max_iters")):
        if getattr(args, flag, None) is not None:
            fit[key] = getattr(args, flag)
    for flag, key in (("margin", "boundary_margin"), ("median_k", "median_k"),
                      ("channel_order", "channel_order"), ("resample_filter", "resample_filter")):
        if getattr(args, flag, None) is not None:
            ext[key] = getattr(args, flag)
    try:
        cfg.fit = FitConfig(**fit)
        cfg.extract = ExtractConfig(**ext)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if getattr(args, "scale", None) is not None:
        cfg.detector_scale = args.scale
    if getattr(args, "detector", None) is not None:
        cfg.detector_method = args.detector
    for name in ("inputs", "output_dir", "demosaic", "color_matrix", "likelihood_dir", "coeff_dir", "workers"):
        v = getattr(args, name, None)
        if v not in (None, []):
            setattr(cfg, name, v)
    if getattr(args, "gamma", None) is not None:
        cfg.output_gamma = args.gamma
    for name in ("save_likelihood", "save_stripe", "save_overlay"):
        if getattr(args, name, False):
            setattr(cfg.diagnostics, name, True)
    return JobConfig.from_dict(dataclasses.asdict(cfg))  # re-validate the merged result


def cmd_pipeline(args) -> int:
    cfg = _job_config(args)
    reports = run_pipeline(cfg)
    failed = [r for r in reports if r["status"] != "ok"]
    for r in reports:
        msg = r.get("error") or f"{r['output']} ({r['timings']['total']:.2f} s)"
        print(f"{r['status']:6s} {r['input']}: {msg}")
    print(f"{len(reports) - len(failed)}/{len(reports)} images ok")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_detect(args) -> int:
    cfg = _job_config(args)
    scan = read_gray(args.scan)
    z = detect_ridges(scan, cfg.detector_scale, cfg.detector_method)
    write_raster(args.output, z, "likelihood")
    try:
        w = estimate_width(z)
        print(json.dumps({"w_hat": w.w_hat, "confidence": w.confidence}))
    except LenticularError as e:
        print(json.dumps({"width_error": str(e)}))
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _job_config(args)
    if args.input.lower().endswith(".lfr"):
        z = read_raster(args.input, "likelihood")
    else:
        z = detect_ridges(read_gray(args.input), cfg.detector_scale, cfg.detector_method)
    w = estimate_width(z) if args.width is None else args.width
    grid, rep = fit_grid(z, w, cfg.fit)
    write_grid(args.output, grid)
    print(json.dumps({"boundaries": grid.M, **dataclasses.asdict(rep)}))
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _job_config(args)
    scan = read_gray(args.scan)
    stripe = extract_stripes(scan, read_grid(args.grid), cfg.extract)
    if not args.raw:
        stripe = median_filter_vertical(stripe, cfg.extract.median_k)
        stripe = resample_vertical(stripe, cfg.extract.resample_filter)
    write_raster(args.output, stripe.values, "gray")
    print(json.dumps({"shape": list(stripe.values.shape)}))
    return EXIT_OK


def cmd_demosaic(args) -> int:
    cfg = _job_config(args)
    values = read_raster(args.stripe, "gray")
    stripe = StripeImage(values, cfg.extract.channel_order)
    tensor = read_raster(args.coeff, "coeff") if args.coeff else None
    write_rgb16(args.output, demosaic(stripe, cfg.demosaic, tensor))
    return EXIT_OK


def cmd_convert_color(args) -> int:
    m = colorspace.LENTICULAR_TO_ADOBE if args.matrix == "builtin" else colorspace.read_matrix(args.matrix)
    rgb = read_rgb(args.input)
    if args.decode_gamma:
        rgb = colorspace.adobe_decode(rgb)
    raw = colorspace.apply_matrix(rgb, m, clamp=False)
    out = np.clip(raw, 0.0, 1.0)
    if args.gamma:
        out = colorspace.adobe_encode(out)
    write_rgb16(args.output, out)
    print(json.dumps({"clipped_pixels": colorspace.out_of_gamut(raw)}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    base = SimParams.from_dict(load_config(args.params)) if args.params else SimParams()
    over = {k: getattr(args, k) for k in ("mean_width", "tilt", "noise_sigma", "boundary_width",
                                          "boundary_depth", "width_mod_amplitude")
            if getattr(args, k) is not None}
    try:
        params = dataclasses.replace(base, **over)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    tilt_range = tuple(args.tilt_range) if args.tilt_range else None
    paths = run_simulate(args.corpus, args.output, args.n, params, args.seed, tilt_range)
    print(f"wrote {len(paths)} scenes to {args.output}")
    return EXIT_OK


def cmd_overlay(args) -> int:
    scan = read_gray(args.scan)
    write_rgb16(args.output, overlay(scan, read_grid(args.grid), args.alpha))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lenticolor", description="Color reconstruction of scanned lenticular film.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, config=True, stages=True):
        sp = sub.add_parser(name, help=help_)
        if config:
            sp.add_argument("--config", help=f"JSON job config (default: ${CONFIG_ENV})")
        if stages:
            _stage_flags(sp)
        sp.set_defaults(func=func)
        return sp

    sp = add("pipeline", cmd_pipeline, "full reconstruction of a batch of scans")
    sp.add_argument("inputs", nargs="*", help="scan files, directories or glob patterns")
    sp.add_argument("-o", "--output-dir", dest="output_dir")
    sp.add_argument("--demosaic", choices=DEMOSAIC_METHODS)
    sp.add_argument("--matrix", dest="color_matrix", help="3x3 matrix file, 'builtin' or 'none'")
    sp.add_argument("--gamma", action=argparse.BooleanOptionalAction, default=None,
                    help="apply the Adobe RGB transfer curve to the output")
    sp.add_argument("--likelihood-dir", help="directory of <name>.lfr boundary maps to use instead of the detector")
    sp.add_argument("--coeff-dir", help="directory of <name>.lfr coefficient tensors for --demosaic convex")
    sp.add_argument("-j", "--workers", type=int)
    sp.add_argument("--save-likelihood", action="store_true")
    sp.add_argument("--save-stripe", action="store_true")
    sp.add_argument("--save-overlay", action="store_true")

    sp = add("detect", cmd_detect, "boundary likelihood map of a scan")
    sp.add_argument("scan")
    sp.add_argument("-o", "--output", required=True, help="output .lfr")

    sp = add("fit", cmd_fit, "fit the lenticule grid to a likelihood map or a scan")
    sp.add_argument("input", help=".lfr likelihood map or a scan image")
    sp.add_argument("-o", "--output", required=True, help="output .lgrid")
    sp.add_argument("--width", type=float, help="lenticule width in px (default: estimated)")

    sp = add("extract", cmd_extract, "stripe image from a scan and its grid")
    sp.add_argument("scan")
    sp.add_argument("grid")
    sp.add_argument("-o", "--output", required=True, help="output .lfr (gray kind)")
    sp.add_argument("--raw", action="store_true", help="skip the median filter and vertical resampling")

    sp = add("demosaic", cmd_demosaic, "fill the missing channels of a stripe image")
    sp.add_argument("stripe", help=".lfr stripe from 'extract'")
    sp.add_argument("-o", "--output", required=True, help="output 16-bit PNG")
    sp.add_argument("--demosaic", choices=DEMOSAIC_METHODS, default="convex")
    sp.add_argument("--coeff", help=".lfr coefficient tensor (with --demosaic convex)")

    sp = add("convert-color", cmd_convert_color, "lenticular RGB to Adobe RGB (or a custom matrix)",
             config=False, stages=False)
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--matrix", default="builtin")
    sp.add_argument("--gamma", action="store_true", help="encode the output with the Adobe RGB curve")
    sp.add_argument("--decode-gamma", action="store_true", help="input is gamma encoded")

    sp = add("simulate", cmd_simulate, "render synthetic scene bundles from an RGB corpus",
             config=False, stages=False)
    sp.add_argument("corpus", help="directory of RGB images")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("-n", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--params", help="JSON file of simulator parameters")
    sp.add_argument("--mean-width", type=float)
    sp.add_argument("--tilt", type=float)
    sp.add_argument("--tilt-range", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--noise-sigma", type=float)
    sp.add_argument("--boundary-width", type=float)
    sp.add_argument("--boundary-depth", type=float)
    sp.add_argument("--width-mod-amplitude", type=float)

    sp = add("overlay", cmd_overlay, "draw a grid over its scan", config=False, stages=False)
    sp.add_argument("scan")
    sp.add_argument("grid")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--alpha", type=float, default=0.5)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = getattr(args, "output", None)
        if out and args.command != "simulate":
            os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CorpusEmpty as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
    except (LenticularError, ValueError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
