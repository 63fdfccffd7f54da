"""Batch orchestration: configuration, per-image processing, simulation bundles, overlays.

Every image runs the same chain: load -> detect (or ingest a map) -> width ->
init -> refine -> extract -> median -> resample -> demosaic -> color -> save.
Each image writes only its own files and errors are caught per image, so the
batch result does not depend on worker count or on failures elsewhere.
"""
from __future__ import annotations

import dataclasses
import glob
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import colorspace
from .demosaic import ANALYTIC_KINDS, BASELINE_KINDS, WeightSource, fill_baseline, fill_convex
from .detect import DEFAULT_SCALE, detect_ridges, estimate_width
from .errors import CorpusEmpty, ConfigError, DimMismatch, LenticularError
from .extract import ExtractConfig, extract_stripes, median_filter_vertical, resample_vertical
from .fit import FitConfig, fit_grid
from .images import READABLE, read_gray, read_rgb, write_gray16, write_rgb16
from .raster import LenticuleGrid, as_gray, read_grid, read_raster, write_grid, write_raster
from .simulate import SimParams, render_scan

log = logging.getLogger(__name__)

CONFIG_ENV = "LENTICOLOR_CONFIG"
BUILTIN_MATRIX = "builtin"
DEMOSAIC_METHODS = ("convex",) + BASELINE_KINDS + tuple(k for k in ANALYTIC_KINDS if k not in BASELINE_KINDS)
OVERLAY_COLOR = (1.0, 0.0, 0.0)
SIM_IMAGE_EXTS = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")


@dataclass
class Diagnostics:
    save_grid: bool = True
    save_likelihood: bool = False
    save_stripe: bool = False
    save_overlay: bool = False


@dataclass
class JobConfig:
    """Everything one batch run needs.  ``inputs`` may hold paths or glob patterns."""

    inputs: list = field(default_factory=list)
    output_dir: str = "out"
    detector_scale: float = DEFAULT_SCALE
    detector_method: str = "model"
    fit: FitConfig = field(default_factory=FitConfig)
    extract: ExtractConfig = field(default_factory=ExtractConfig)
    demosaic: str = "convex"
    color_matrix: str = BUILTIN_MATRIX
    output_gamma: bool = False
    likelihood_dir: str | None = None
    coeff_dir: str | None = None
    workers: int = 1
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self):
        if isinstance(self.inputs, str):
            self.inputs = [self.inputs]
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.demosaic not in DEMOSAIC_METHODS:
            raise ConfigError(f"demosaic must be one of {DEMOSAIC_METHODS}, got {self.demosaic!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "JobConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            if "fit" in d:
                d["fit"] = FitConfig(**d["fit"])
            if "extract" in d:
                d["extract"] = ExtractConfig(**d["extract"])
            if "diagnostics" in d:
                d["diagnostics"] = Diagnostics(**d["diagnostics"])
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    def expand_inputs(self) -> list[str]:
        paths = []
        for pat in self.inputs:
            hits = sorted(glob.glob(pat)) if glob.has_magic(pat) else [pat]
            for h in hits:
                if os.path.isdir(h):
                    paths += sorted(os.path.join(h, f) for f in os.listdir(h) if f.lower().endswith(READABLE))
                else:
                    paths.append(h)
        return paths

    def check(self) -> list[str]:
        """Validate referenced files; returns the input list."""
        paths = self.expand_inputs()
        if not paths:
            raise ConfigError("no input images")
        missing = [p for p in paths if not os.path.isfile(p)]
        if missing:
            raise ConfigError(f"missing inputs: {missing}")
        if self.color_matrix not in (BUILTIN_MATRIX, "none") and not os.path.isfile(self.color_matrix):
            raise ConfigError(f"color matrix file {self.color_matrix} not found")
        for d in (self.likelihood_dir, self.coeff_dir):
            if d is not None and not os.path.isdir(d):
                raise ConfigError(f"directory {d} not found")
        stems = [_stem(p) for p in paths]
        if len(set(stems)) != len(stems):
            raise ConfigError("input file names must be unique (outputs are named after them)")
        return paths


def load_config(path: str | None = None) -> dict:
    """Read a JSON config; falls back to the file named by $LENTICOLOR_CONFIG."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        with open(path) as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(d, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return d


def color_matrix(spec: str) -> np.ndarray | None:
    if spec == BUILTIN_MATRIX:
        return colorspace.LENTICULAR_TO_ADOBE
    if spec == "none":
        return None
    return colorspace.read_matrix(spec)


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def demosaic(stripe, method: str, tensor=None) -> np.ndarray:
    if method == "convex":
        src = WeightSource.external(tensor) if tensor is not None else WeightSource.analytic("convex-cubic")
        return fill_convex(stripe, src)
    if method in BASELINE_KINDS:
        return fill_baseline(stripe, method)
    return fill_convex(stripe, method)


def reconstruct(scan, cfg: JobConfig, z=None, grid: LenticuleGrid | None = None, tensor=None,
                timings: dict | None = None) -> dict:
    """Run the in-memory chain on one scan; returns the intermediates and the linear RGB result."""
    timings = {} if timings is None else timings
    clock = time.perf_counter
    t0 = clock()
    scan = as_gray(scan)
    res = {"scan": scan}
    width = None
    if grid is None:
        if z is None:
            z = detect_ridges(scan, cfg.detector_scale, cfg.detector_method)
            timings["detect"] = clock() - t0
        res["z"] = z
        t0 = clock()
        width = estimate_width(z)
        timings["width"] = clock() - t0
        t0 = clock()
        grid, rep = fit_grid(z, width, cfg.fit)
        timings["fit"] = clock() - t0
        res["fit_report"] = dataclasses.asdict(rep)
    res["width"] = width
    res["grid"] = grid
    t0 = clock()
    stripe = extract_stripes(scan, grid, cfg.extract)
    stripe = median_filter_vertical(stripe, cfg.extract.median_k)
    stripe = resample_vertical(stripe, cfg.extract.resample_filter)
    timings["extract"] = clock() - t0
    res["stripe"] = stripe
    t0 = clock()
    rgb = demosaic(stripe, cfg.demosaic, tensor)
    timings["demosaic"] = clock() - t0
    t0 = clock()
    m = color_matrix(cfg.color_matrix)
    res["clipped"] = 0
    if m is not None:
        raw = colorspace.apply_matrix(rgb, m, clamp=False)
        res["clipped"] = colorspace.out_of_gamut(raw)
        rgb = np.clip(raw, 0.0, 1.0)
    if cfg.output_gamma:
        rgb = colorspace.adobe_encode(rgb)
    timings["color"] = clock() - t0
    res["rgb"] = rgb
    return res


def process_image(path: str, cfg: JobConfig) -> dict:
    """Run the chain on one file and write its outputs; never raises for image-level faults."""
    stem = _stem(path)
    out = cfg.output_dir
    report = {"input": path, "status": "ok"}
    os.makedirs(out, exist_ok=True)
    timings = {}
    t_all = time.perf_counter()
    try:
        t0 = time.perf_counter()
        scan = read_gray(path)
        timings["load"] = time.perf_counter() - t0
        z = None
        if cfg.likelihood_dir:
            zp = os.path.join(cfg.likelihood_dir, stem + ".lfr")
            if os.path.isfile(zp):
                z = read_raster(zp, "likelihood", shape=scan.shape)
                report["likelihood"] = zp
        tensor = None
        if cfg.coeff_dir:
            tp = os.path.join(cfg.coeff_dir, stem + ".lfr")
            if os.path.isfile(tp):
                tensor = read_raster(tp, "coeff")
                report["coeff_tensor"] = tp
        res = reconstruct(scan, cfg, z=z, tensor=tensor, timings=timings)
        t0 = time.perf_counter()
        rgb_path = os.path.join(out, stem + ".png")
        write_rgb16(rgb_path, res["rgb"])
        report["output"] = rgb_path
        d = cfg.diagnostics
        if d.save_grid:
            write_grid(os.path.join(out, stem + ".lgrid"), res["grid"])
        if d.save_likelihood:
            write_raster(os.path.join(out, stem + ".likelihood.lfr"), res["z"], "likelihood")
        if d.save_stripe:
            write_raster(os.path.join(out, stem + ".stripe.lfr"), res["stripe"].values, "gray")
        if d.save_overlay:
            write_rgb16(os.path.join(out, stem + ".overlay.png"), overlay(scan, res["grid"]))
        timings["save"] = time.perf_counter() - t0
        w = res["width"]
        report.update({
            "width": None if w is None else {"w_hat": w.w_hat, "confidence": w.confidence},
            "boundaries": res["grid"].M,
            "fit": res.get("fit_report"),
            "stripe_shape": list(res["stripe"].values.shape),
            "output_shape": list(res["rgb"].shape),
            "clipped_pixels": res["clipped"],
        })
    except (LenticularError, ValueError, OSError, FloatingPointError) as e:
        report.update(status="failed", error=f"{type(e).__name__}: {e}")
        log.warning("%s failed: %s", path, e)
    timings["total"] = time.perf_counter() - t_all
    report["timings"] = timings
    try:
        with open(os.path.join(out, stem + ".report.json"), "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
    except OSError as e:  # the report itself is best effort
        log.warning("cannot write report for %s: %s", path, e)
    return report


def _process_star(args):
    return process_image(*args)


def run_pipeline(cfg: JobConfig) -> list[dict]:
    """Process every input; reports come back in input order."""
    paths = cfg.check()
    os.makedirs(cfg.output_dir, exist_ok=True)
    jobs = [(p, cfg) for p in paths]
    if cfg.workers == 1 or len(paths) == 1:
        reports = [process_image(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(paths))) as pool:
            reports = list(pool.map(_process_star, jobs))
    summary = {
        "images": len(reports),
        "failed": [r["input"] for r in reports if r["status"] != "ok"],
        "config": cfg.to_dict(),
    }
    with open(os.path.join(cfg.output_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True, default=str)
    return reports


def overlay(scan, grid: LenticuleGrid, alpha: float = 0.5, color=OVERLAY_COLOR) -> np.ndarray:
    """Scan as RGB with each boundary drawn at its nearest pixel on every row, blended by ``alpha``."""
    scan = np.asarray(scan, dtype=np.float64)
    if scan.shape != (grid.height, grid.width):
        raise DimMismatch(f"grid is {grid.height}x{grid.width}, scan is {scan.shape[0]}x{scan.shape[1]}")
    out = np.repeat(scan[..., None], 3, axis=2)
    X = np.floor(grid.positions() + 0.5).astype(np.intp)  # (M, H)
    rows = np.broadcast_to(np.arange(grid.height), X.shape)
    out[rows, X] = (1 - alpha) * out[rows, X] + alpha * np.asarray(color)
    return out


def list_corpus(corpus_dir: str) -> list[str]:
    if not os.path.isdir(corpus_dir):
        raise CorpusEmpty(f"{corpus_dir} is not a directory")
    files = sorted(os.path.join(corpus_dir, f) for f in os.listdir(corpus_dir)
                   if f.lower().endswith(SIM_IMAGE_EXTS))
    if not files:
        raise CorpusEmpty(f"no images in {corpus_dir}")
    return files


def write_bundle(path: str, scene, source_name: str | None = None) -> None:
    """Scene bundle: 16-bit PNG scan, LGRID truth grid and JSON params."""
    os.makedirs(path, exist_ok=True)
    write_gray16(os.path.join(path, "scan.png"), scene.scan)
    write_grid(os.path.join(path, "grid.lgrid"), scene.truth_grid)
    meta = {"params": scene.params.to_dict(), "source": source_name}
    with open(os.path.join(path, "params.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def run_simulate(corpus_dir: str, out_dir: str, n: int, params: SimParams | None = None,
                 seed: int = 0, tilt_range: tuple[float, float] | None = None) -> list[str]:
    """Render ``n`` scenes, cycling through the corpus; scene i uses seed ``seed + i``."""
    files = list_corpus(corpus_dir)
    params = params or SimParams()
    out = []
    for i in range(n):
        p = dataclasses.replace(params, seed=seed + i)
        if tilt_range is not None:
            g = np.random.Generator(np.random.Philox(seed + i + 0x7117))
            p = dataclasses.replace(p, tilt=float(g.uniform(*tilt_range)))
        src = files[i % len(files)]
        scene = render_scan(read_rgb(src), p)
        path = os.path.join(out_dir, f"scene_{i:04d}")
        write_bundle(path, scene, os.path.basename(src))
        out.append(path)
    return out


def read_bundle(path: str):
    """Scan, truth grid and params of a scene bundle."""
    scan = read_gray(os.path.join(path, "scan.png"))
    grid = read_grid(os.path.join(path, "grid.lgrid"))
    with open(os.path.join(path, "params.json")) as f:
        meta = json.load(f)
    return scan, grid, SimParams.from_dict(meta["params"])
