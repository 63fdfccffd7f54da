"""Color reconstruction of scanned lenticular film."""
from .colorspace import LENTICULAR_TO_ADOBE, apply_matrix, compose_cat
from .demosaic import WeightSource, build_neighbor_index, fill_baseline, fill_convex
from .detect import WidthEstimate, detect_ridges, estimate_width
from .errors import *  # noqa: F401,F403
from .extract import ExtractConfig, extract_stripes, median_filter_vertical, resample_vertical
from .fit import FitConfig, FitReport, fit_grid, init_grid, objective, objective_gradient, refine_grid
from .raster import (LenticuleGrid, StripeImage, as_gray, as_likelihood, read_grid, read_raster,
                     write_grid, write_raster)
from .simulate import SimParams, SimScene, random_source, render_scan, round_trip_error

__version__ = "0.1.0"

__all__ = [
    "LENTICULAR_TO_ADOBE", "apply_matrix", "compose_cat",
    "WeightSource", "build_neighbor_index", "fill_baseline", "fill_convex",
    "WidthEstimate", "detect_ridges", "estimate_width",
    "ExtractConfig", "extract_stripes", "median_filter_vertical", "resample_vertical",
    "FitConfig", "FitReport", "fit_grid", "init_grid", "objective", "objective_gradient", "refine_grid",
    "LenticuleGrid", "StripeImage", "as_gray", "as_likelihood", "read_grid", "read_raster",
    "write_grid", "write_raster",
    "SimParams", "SimScene", "random_source", "render_scan", "round_trip_error",
]
