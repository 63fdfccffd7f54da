"""Stripe extraction: scan + grid -> H x 3(M-1) stripe image, vertical median, resampling.

Each lenticule between boundaries m and m+1 is cut into three channel bands.
Band k nominally spans the k-th third of the lenticule; it is clipped to the
margin span ``[x_m + margin*w, x_{m+1} - margin*w]``, and its edges are pulled
in by small guards so that a pixel straddling two bands, or reaching into a
boundary line, does not contribute.  Scan pixel c covers ``[c - 0.5, c + 0.5]``
and a band weights it by the fraction of that footprint it covers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .errors import DegenerateOutput, GridImageMismatch
from .raster import LenticuleGrid, StripeImage, as_gray

# A pixel partly inside a band still brings its whole footprint, so band edges
# are pulled in far enough that no counted pixel reaches across them.
INNER_GUARD = 1.0  # px, at the edges between two bands of one lenticule
OUTER_GUARD = 0.5  # px, added to the margin at the boundary-line side
GUARD_FRACTION = 0.3  # guards never exceed this share of a band
MIN_OUTPUT_HEIGHT = 8
FILTERS = ("nearest", "linear")


@dataclass(frozen=True)
class ExtractConfig:
    channel_order: tuple[int, int, int] = (0, 1, 2)
    boundary_margin: float = 0.1
    median_k: int = 3
    resample_filter: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "channel_order", tuple(int(c) for c in self.channel_order))
        if sorted(self.channel_order) != [0, 1, 2]:
            raise ValueError(f"channel_order must be a permutation of (0, 1, 2), got {self.channel_order}")
        if not 0.0 <= self.boundary_margin <= 0.2:
            raise ValueError("boundary_margin must lie in [0, 0.2]")
        if self.median_k < 1 or self.median_k % 2 == 0:
            raise ValueError("median_k must be odd and >= 1")
        if self.resample_filter not in FILTERS:
            raise ValueError(f"resample_filter must be one of {FILTERS}")


def band_limits(grid: LenticuleGrid, margin: float = 0.1, rows=None):
    """Left and right x limits of every band, each shaped (R, 3(M-1))."""
    X = grid.positions(rows)  # (M, R)
    left, w = X[:-1], np.diff(X, axis=0)
    third = w / 3.0
    guard = np.minimum(INNER_GUARD, GUARD_FRACTION * third)
    outer = np.minimum(OUTER_GUARD, GUARD_FRACTION * third)
    k = np.arange(3)[None, :, None]
    lo = left[:, None, :] + k * third[:, None, :] + guard[:, None, :]
    hi = left[:, None, :] + (k + 1) * third[:, None, :] - guard[:, None, :]
    lo[:, 0] = left + margin * w + outer
    hi[:, 2] = left + (1 - margin) * w - outer
    lo = np.minimum(lo, hi)  # wide margins can eat an outer band's guard room
    R = X.shape[1]
    return lo.reshape(-1, R).T, hi.reshape(-1, R).T


def _row_integral(scan: np.ndarray):
    """Function giving the integral of each piecewise-constant row from -0.5 to x."""
    H, W = scan.shape
    cs = np.zeros((H, W + 1))
    np.cumsum(scan, axis=1, out=cs[:, 1:])
    cs, flat = cs.ravel(), scan.ravel()

    def at(x):
        x = np.clip(x, -0.5, W - 0.5)
        k = np.minimum(np.floor(x + 0.5).astype(np.intp), W - 1)
        row = np.arange(H)[:, None]
        return np.take(cs, k + row * (W + 1)) + (x + 0.5 - k) * np.take(flat, k + row * W)

    return at


def extract_stripes(scan, grid: LenticuleGrid, cfg: ExtractConfig | None = None) -> StripeImage:
    """Area-weighted band means for every row and every complete lenticule."""
    cfg = cfg or ExtractConfig()
    scan = as_gray(scan)
    if scan.shape != (grid.height, grid.width):
        raise GridImageMismatch(f"grid was fitted on {grid.height}x{grid.width}, scan is {scan.shape[0]}x{scan.shape[1]}")
    if grid.M < 2:
        raise GridImageMismatch("grid needs at least two boundaries to hold a lenticule")
    lo, hi = band_limits(grid, cfg.boundary_margin)
    lo = np.clip(lo, -0.5, grid.width - 0.5)
    hi = np.clip(hi, -0.5, grid.width - 0.5)
    span = hi - lo
    thin = span < 1e-9
    integral = _row_integral(scan)
    area = integral(hi) - integral(lo)
    vals = np.where(thin, 0.0, area / np.where(thin, 1.0, span))
    if thin.any():
        # degenerate band: the pixel under its center
        c = np.clip(np.floor(0.5 * (lo + hi) + 0.5).astype(np.intp), 0, grid.width - 1)
        point = np.take_along_axis(scan, c, axis=1)
        vals = np.where(thin, point, vals)
    # rounding can push a mean a hair outside the covered pixel range
    vals = np.clip(vals, scan.min(), scan.max())
    return StripeImage(vals, cfg.channel_order, grid.width)


def median_filter_vertical(stripe: StripeImage, k: int = 3) -> StripeImage:
    """Per-column running median; the first and last rows use truncated windows."""
    if k < 1 or k % 2 == 0:
        raise ValueError("median window must be odd and >= 1")
    v = stripe.values
    H = v.shape[0]
    r = k // 2
    if r == 0:
        return stripe
    out = np.empty_like(v)
    if H > 2 * r:
        win = np.lib.stride_tricks.sliding_window_view(v, k, axis=0)
        out[r:H - r] = np.median(win, axis=-1)
    for h in list(range(min(r, H))) + list(range(max(H - r, r), H)):
        out[h] = np.median(v[max(0, h - r):h + r + 1], axis=0)
    return stripe.replace(out)


def output_height(M: int, H: int, W: int) -> int:
    """Target height 3(M-1)H/W, rounded half away from zero."""
    return int(np.floor(3 * (M - 1) * H / W + 0.5))


def _resample_matrix(n_in: int, n_out: int, kind: str):
    # pixel-center alignment; the linear tent widens when shrinking so every
    # input row contributes (a plain 2-tap lerp would skip rows)
    scale = n_in / n_out
    y = (np.arange(n_out) + 0.5) * scale - 0.5
    if kind == "nearest":
        j = np.clip(np.floor(y + 0.5).astype(np.intp), 0, n_in - 1)
        return scipy.sparse.csr_matrix((np.ones(n_out), (np.arange(n_out), j)), shape=(n_out, n_in))
    support = max(1.0, scale)
    reach = int(np.ceil(support))
    j = np.floor(y).astype(np.intp)[:, None] + np.arange(-reach, reach + 2)[None, :]
    w = np.maximum(0.0, 1.0 - np.abs(j - y[:, None]) / support)
    w[(j < 0) | (j >= n_in)] = 0.0
    edge = w.sum(axis=1) == 0  # only possible past the ends: snap to the end row
    jc = np.clip(j, 0, n_in - 1)
    w[edge, 0] = 1.0
    w /= w.sum(axis=1, keepdims=True)
    rows = np.repeat(np.arange(n_out), j.shape[1])
    return scipy.sparse.csr_matrix((w.ravel(), (rows, jc.ravel())), shape=(n_out, n_in))


def resample_vertical(stripe: StripeImage, kind: str = "linear", source_width: int | None = None) -> StripeImage:
    """Resample every column to height 3(M-1)H/W so the stripe pixels become square."""
    if kind not in FILTERS:
        raise ValueError(f"unknown resample filter {kind!r}")
    W = source_width if source_width is not None else stripe.source_width
    if W is None:
        raise ValueError("source width unknown: pass source_width")
    H, C = stripe.values.shape
    Hp = output_height(C // 3 + 1, H, W)
    if Hp < MIN_OUTPUT_HEIGHT:
        raise DegenerateOutput(f"resampled height {Hp} is below {MIN_OUTPUT_HEIGHT}")
    if Hp == H and kind == "nearest":
        return stripe
    A = _resample_matrix(H, Hp, kind)
    out = np.asarray(A @ stripe.values)
    lo, hi = stripe.values.min(), stripe.values.max()
    return StripeImage(np.clip(out, lo, hi), stripe.channel_order, W)
