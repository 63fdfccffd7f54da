"""Forward model: synthetic lenticular scans with known grids, for end-to-end checks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimMismatch, SourceTooNarrow
from .raster import LenticuleGrid, StripeImage

MIN_LENTICULES = 8
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
# point samples per pixel (along x) used to model the scanner's pixel footprint
SUBSAMPLES = 8
ROW_CHUNK = 64


@dataclass(frozen=True)
class SimParams:
    """Film geometry and degradation settings for :func:`render_scan`.

    ``boundary_width`` is the full width at half maximum of the dark boundary
    line; ``boundary_depth`` is the fraction of light it removes at its center.
    Gain and offset are drawn uniformly from their ranges once per scan.
    """

    mean_width: float = 16.0
    width_mod_amplitude: float = 0.05
    width_mod_period: float = 40.0
    width_mod_phase: float = 0.0
    tilt: float = 0.5
    boundary_width: float = 1.0
    boundary_depth: float = 0.6
    noise_sigma: float = 0.01
    gain_range: tuple[float, float] = (1.0, 1.0)
    offset_range: tuple[float, float] = (0.0, 0.0)
    channel_order: tuple[int, int, int] = (0, 1, 2)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.width_mod_amplitude <= 0.1:
            raise ValueError("width_mod_amplitude must lie in [0, 0.1]")
        if abs(self.tilt) > 2.0:
            raise ValueError("|tilt| must not exceed 2 degrees")
        if self.mean_width < 6:
            raise ValueError("mean_width must be at least 6 px")
        if not 0 <= self.boundary_depth <= 1:
            raise ValueError("boundary_depth must lie in [0, 1]")
        if sorted(self.channel_order) != [0, 1, 2]:
            raise ValueError("channel_order must be a permutation of (0, 1, 2)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimParams":
        d = dict(d)
        for k in ("gain_range", "offset_range", "channel_order"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class SimScene:
    scan: np.ndarray
    truth_grid: LenticuleGrid
    truth_stripe: StripeImage
    source: np.ndarray
    params: SimParams = field(default_factory=SimParams)


def rng_for(seed: int) -> np.random.Generator:
    # counter-based generator: same stream on every platform
    return np.random.Generator(np.random.Philox(int(seed)))


def random_source(height: int, width: int, seed: int = 0) -> np.ndarray:
    """A smooth-but-structured random RGB test image in [0.05, 0.95].

    Low-frequency color fields plus a handful of sharp-edged discs and bars.
    """
    rng = rng_for(seed + 0x5EED)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.zeros((height, width, 3))
    for _ in range(6):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        s = rng.uniform(0.15, 0.5) * min(height, width)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        img += blob[..., None] * rng.uniform(-0.5, 0.5, 3)
    for _ in range(5):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        r = rng.uniform(0.05, 0.2) * min(height, width)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        img[mask] = 0.5 * img[mask] + rng.uniform(-0.4, 0.4, 3)
    for _ in range(3):
        x0 = rng.uniform(0, width)
        bw = rng.uniform(4, 0.1 * width)
        mask = (xx - x0 - 0.2 * (yy - height / 2) > 0) & (xx - x0 - 0.2 * (yy - height / 2) < bw)
        img[mask] += rng.uniform(-0.3, 0.3, 3)
    img += 0.5
    lo, hi = img.min(), img.max()
    return 0.05 + 0.9 * (img - lo) / (hi - lo)


def lenticule_widths(count: int, p: SimParams) -> np.ndarray:
    m = np.arange(count)
    return p.mean_width * (1.0 + p.width_mod_amplitude * np.sin(2 * np.pi * m / p.width_mod_period + p.width_mod_phase))


def render_scan(src, p: SimParams | None = None) -> SimScene:
    """Encode an RGB image as a grayscale lenticular scan.

    Every lenticule is split into three equal bands carrying one channel each
    (``channel_order`` left to right).  A band's value is the source pixel at the
    band center on the same row, so the stripe image is recoverable exactly from
    the scan and the true grid.  Boundaries are straight lines sheared by ``tilt``
    with the top row fixed: ``b[m] - t[m] = (H - 1) tan(tilt)``.

    Each boundary darkens the image multiplicatively by a Gaussian valley of
    the configured depth and FWHM, and every pixel averages ``SUBSAMPLES``
    point samples across its footprint, so lines land at sub-pixel positions.
    Gain, offset and noise are applied last and the result is clipped to [0, 1].
    """
    p = p or SimParams()
    src = np.asarray(src, dtype=np.float64)
    if src.ndim != 3 or src.shape[2] != 3:
        raise DimMismatch(f"source must be H x W x 3, got {src.shape}")
    H, W = src.shape[:2]
    rng = rng_for(p.seed)
    start = rng.uniform(0.0, p.mean_width)
    gain = rng.uniform(*p.gain_range)
    offset = rng.uniform(*p.offset_range)

    slope = math.tan(math.radians(p.tilt))
    shear = slope * (H - 1)
    pad = abs(shear) + 3 * p.mean_width
    n = int(math.ceil((W + 2 * pad) / (p.mean_width * (1 - p.width_mod_amplitude)))) + 2
    widths = lenticule_widths(n, p)
    T = start - pad + np.concatenate([[0.0], np.cumsum(widths)])
    T = T[T <= W - 1 + pad]
    B = T + shear

    inside = np.flatnonzero((T >= 0) & (T <= W - 1) & (B >= 0) & (B <= W - 1))
    if inside.size - 1 < MIN_LENTICULES:
        raise SourceTooNarrow(f"only {max(inside.size - 1, 0)} complete lenticules fit; need {MIN_LENTICULES}")

    order = np.asarray(p.channel_order)
    sigma = max(p.boundary_width, 1e-6) / FWHM_PER_SIGMA
    scan = np.empty((H, W))
    for r0 in range(0, H, ROW_CHUNK):
        rows = np.arange(r0, min(r0 + ROW_CHUNK, H))
        scan[rows] = _render_rows(src, rows, T, slope, order, sigma, p.boundary_depth)
    scan = gain * scan + offset
    if p.noise_sigma > 0:
        scan = scan + p.noise_sigma * rng.standard_normal((H, W))
    scan = np.clip(scan, 0.0, 1.0)

    tg, bg = T[inside], B[inside]
    grid = LenticuleGrid(tg, bg, H, W)
    stripe = StripeImage(_band_samples(src, tg, slope, order), tuple(p.channel_order), W)
    return SimScene(scan, grid, stripe, src, p)


def _render_rows(src, rows, T, slope, order, sigma, depth):
    # each pixel averages SUBSAMPLES point samples across its 1 px footprint in x
    W = src.shape[1]
    offs = (np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES - 0.5
    x = np.arange(W, dtype=np.float64)[:, None] + offs[None, :]  # (W, S)
    u = x[None] - slope * rows[:, None, None].astype(np.float64)  # top-row frame
    m = np.clip(np.searchsorted(T, u, side="right") - 1, 0, T.size - 2)
    left, right = T[m], T[m + 1]
    band = np.minimum((3.0 * (u - left) / (right - left)).astype(np.intp), 2)
    band_center = left + (band + 0.5) * (right - left) / 3.0 + slope * rows[:, None, None]
    col = np.clip(np.rint(band_center), 0, W - 1).astype(np.intp)
    value = src[rows[:, None, None], col, order[band]]
    line = lambda d: 1.0 - depth * np.exp(-0.5 * (d / sigma) ** 2)
    return (value * line(u - left) * line(right - u)).mean(axis=2)


def _band_samples(src, T, slope, order) -> np.ndarray:
    H, W = src.shape[:2]
    rows = np.arange(H, dtype=np.float64)
    widths = np.diff(T)
    centers = T[:-1, None] + (np.arange(3)[None, :] + 0.5) * widths[:, None] / 3.0  # (M-1, 3)
    x = centers.ravel()[None, :] + slope * rows[:, None]
    col = np.clip(np.rint(x), 0, W - 1).astype(np.intp)
    ch = np.tile(order, widths.size)
    return src[rows.astype(np.intp)[:, None], col, ch[None, :]]


def column_centers(grid: LenticuleGrid, rows) -> np.ndarray:
    """x position of every stripe column's band center on ``rows``; shape (len(rows), 3(M-1))."""
    X = grid.positions(rows)  # (M, R)
    left, w = X[:-1], np.diff(X, axis=0)
    c = left[:, None, :] + (np.arange(3)[None, :, None] + 0.5) * w[:, None, :] / 3.0
    return c.reshape(-1, X.shape[1]).T


def resample_to_source(rgb, grid: LenticuleGrid) -> np.ndarray:
    """Map a (H', 3(M-1), 3) reconstruction back onto the scan's pixel grid.

    Rows are stretched linearly back to H; along each row the band centers of
    ``grid`` are interpolated linearly.  Pixels outside the grid span are NaN.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    H, W = grid.height, grid.width
    Hp, C = rgb.shape[:2]
    if C != 3 * (grid.M - 1):
        raise DimMismatch(f"reconstruction has {C} columns, grid implies {3 * (grid.M - 1)}")
    y = (np.arange(H) + 0.5) * Hp / H - 0.5
    y = np.clip(y, 0, Hp - 1)
    y0 = np.floor(y).astype(np.intp)
    y1 = np.minimum(y0 + 1, Hp - 1)
    fy = (y - y0)[:, None, None]
    tall = (1 - fy) * rgb[y0] + fy * rgb[y1]  # (H, C, 3)
    centers = column_centers(grid, np.arange(H))
    out = np.full((H, W, 3), np.nan)
    xs = np.arange(W, dtype=np.float64)
    for h in range(H):
        cx = centers[h]
        ok = (xs >= cx[0]) & (xs <= cx[-1])
        for ch in range(3):
            out[h, ok, ch] = np.interp(xs[ok], cx, tall[h, :, ch])
    return out


def round_trip_error(scene: SimScene, output, border: int = 2) -> dict:
    """PSNR (dB, peak 1) and per-channel MAE of ``output`` against the scene source.

    Only pixels at least ``border`` lenticules inside the true grid count; NaN
    pixels of ``output`` (outside its own grid) are excluded as well.
    """
    out = np.asarray(output, dtype=np.float64)
    src = scene.source
    if out.shape != src.shape:
        raise DimMismatch(f"output shape {out.shape} differs from source {src.shape}")
    g = scene.truth_grid
    H, W = src.shape[:2]
    X = g.positions()
    lo, hi = X[border], X[g.M - 1 - border]
    xs = np.arange(W)[None, :]
    mask = (xs >= lo[:, None]) & (xs <= hi[:, None])
    mask &= np.all(np.isfinite(out), axis=2)
    if not mask.any():
        raise DimMismatch("no overlapping valid pixels")
    diff = out[mask] - src[mask]
    mse = float(np.mean(diff ** 2))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)
    return {"psnr": psnr, "mae": np.abs(diff).mean(axis=0), "pixels": int(mask.sum())}


def grid_error(truth: LenticuleGrid, fitted: LenticuleGrid, margin: float = 1.0) -> dict:
    """Endpoint RMS between a fitted grid and the true one.

    Every true boundary with both endpoints at least ``margin`` px inside the
    frame is paired with the fitted boundary whose midpoint is nearest; the
    RMS runs over the t and b differences of those pairs.  Boundaries closer
    to the edge than ``margin`` cannot be seen by a local detector and are
    left out.
    """
    lo, hi = margin, truth.width - 1 - margin
    ok = (np.minimum(truth.t, truth.b) >= lo) & (np.maximum(truth.t, truth.b) <= hi)
    tm = 0.5 * (truth.t + truth.b)[ok]
    fm = 0.5 * (fitted.t + fitted.b)
    idx = np.abs(tm[:, None] - fm[None, :]).argmin(axis=1)
    d = np.concatenate([fitted.t[idx] - truth.t[ok], fitted.b[idx] - truth.b[ok]])
    return {"rms": float(np.sqrt(np.mean(d * d))), "max": float(np.abs(d).max()),
            "matched": int(ok.sum()), "fitted": fitted.M}
