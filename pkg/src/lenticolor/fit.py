"""Vectorized lenticule grid: peak-detector initialization and regularized line fitting.

Boundary ``m`` is the straight line from ``(0, t[m])`` to ``(H - 1, b[m])``.  The fit
minimizes

    -sum_m sum_h z(h, x_m(h)) + lambda1 * r1(t, b) + lambda2 * r2(t, b)

where ``r1`` penalizes first differences that deviate from the width estimate and
``r2`` penalizes second differences of the boundary positions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize, signal

from .detect import WidthEstimate, estimate_shear
from .errors import IllPosedFit, NonFiniteObjective, TooFewPeaks
from .raster import MAX_TILT_DEG, LenticuleGrid, as_likelihood

log = logging.getLogger(__name__)

MIN_BOUNDARIES = 4
SHEAR_STEP = 0.5
# the shear search first steps SHEAR_COARSE times wider and keeps this many candidates
SHEAR_COARSE = 4
SHEAR_CANDIDATES = 3
# rows sampled (evenly) when scoring candidate shears
SHEAR_ROWS = 128
PIN_TOL = 1e-6


@dataclass(frozen=True)
class FitConfig:
    lambda1: float = 1.0
    lambda2: float = 10.0
    max_iters: int = 200
    grad_tol: float = 1e-6
    smooth_sigma: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.smooth_sigma < 0:
            raise ValueError("smooth_sigma must be non-negative")


@dataclass(frozen=True)
class FitReport:
    objective: float
    data: float
    r1: float
    r2: float
    iterations: int = 0
    converged: bool = True


def _w(w_hat) -> float:
    return float(w_hat.w_hat if isinstance(w_hat, WidthEstimate) else w_hat)


def first_difference(v) -> np.ndarray:
    """``D @ v`` with ``D[i, i] = -1`` and ``D[i, i + 1] = 1``."""
    return np.diff(np.asarray(v, dtype=np.float64))


def second_difference(v) -> np.ndarray:
    """``H @ v`` with ``H[i, i] = 1``, ``H[i, i + 1] = -2``, ``H[i, i + 2] = 1``."""
    v = np.asarray(v, dtype=np.float64)
    return v[:-2] - 2.0 * v[1:-1] + v[2:]


def _first_difference_T(r: np.ndarray) -> np.ndarray:
    # D.T @ r
    out = np.zeros(r.size + 1)
    out[:-1] -= r
    out[1:] += r
    return out


def _second_difference_T(r: np.ndarray) -> np.ndarray:
    # H.T @ r
    out = np.zeros(r.size + 2)
    out[:-2] += r
    out[1:-1] -= 2.0 * r
    out[2:] += r
    return out


def regularizer_r1(grid: LenticuleGrid, w_hat) -> float:
    """Squared deviation of every lenticule width from ``w_hat``, top and bottom rows."""
    w = _w(w_hat)
    return float(np.sum((first_difference(grid.t) - w) ** 2) + np.sum((first_difference(grid.b) - w) ** 2))


def regularizer_r2(grid: LenticuleGrid) -> float:
    return float(np.sum(second_difference(grid.t) ** 2) + np.sum(second_difference(grid.b) ** 2))


def smooth_map(z, sigma: float) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if sigma <= 0:
        return z
    return ndimage.gaussian_filter1d(z, sigma, axis=1, mode="nearest")


SPLINE_PAD = 6


class _Objective:
    """Objective and gradient over the packed vector ``(t, b)`` for one pre-smoothed map.

    Rows are sampled in x with a cubic B-spline interpolant of the map.  The
    map is mirrored at the frame edges, so a constant map stays exactly
    constant up to the outermost columns.
    """

    def __init__(self, zs: np.ndarray, lambda1: float, lambda2: float, w_hat: float):
        H, W = zs.shape
        self.H, self.W = H, W
        self.lambda1, self.lambda2, self.w_hat = lambda1, lambda2, w_hat
        P = SPLINE_PAD
        coeffs = ndimage.spline_filter1d(zs, order=3, axis=1, mode="mirror")
        # coefficients of the mirrored map are the mirrored coefficients
        coeffs = np.pad(coeffs, ((0, 0), (P, P)), mode="reflect")
        self.flat = np.ascontiguousarray(coeffs).ravel()
        self.stride = W + 2 * P
        self.frac = np.arange(H) / (H - 1)
        self.row_base = np.arange(H) * self.stride + P - 1

    def sample(self, X, rows=None, with_der=True):
        """Interpolated map value (and x-derivative) at positions X (M x len(rows))."""
        x0 = np.clip(np.floor(X), 2 - SPLINE_PAD, self.W + SPLINE_PAD - 3)
        u = X - x0
        base = self.row_base if rows is None else self.row_base[rows]
        # the four spline coefficients around node i0 sit at flat[idx : idx + 4]
        idx = x0.astype(np.intp)
        idx += base
        c0 = np.take(self.flat, idx)
        idx += 1
        c1 = np.take(self.flat, idx)
        idx += 1
        c2 = np.take(self.flat, idx)
        idx += 1
        c3 = np.take(self.flat, idx)
        # cubic B-spline in power form around node i0, built in place
        a1 = c2 - c0
        a1 *= 0.5
        a2 = c0 + c2
        a2 *= 0.5
        a2 -= c1
        a3 = c3 - c0
        a3 *= 1.0 / 6.0
        c3 = c1 - c2
        c3 *= 0.5
        a3 += c3
        c0 += c2
        c1 *= 4.0
        c0 += c1
        c0 *= 1.0 / 6.0
        val = a3 * u
        val += a2
        val *= u
        val += a1
        val *= u
        val += c0
        if not with_der:
            return val, None
        der = a3 * 3.0
        der *= u
        a2 *= 2.0
        der += a2
        der *= u
        der += a1
        return val, der

    def data_term(self, t, b, with_grad=False, rows=None):
        frac = self.frac if rows is None else self.frac[rows]
        X = t[:, None] + frac[None, :] * (b - t)[:, None]
        val, der = self.sample(X, rows, with_grad)
        data = -float(np.sum(val))
        if not with_grad:
            return data, None
        g_b = -(der @ frac)
        g_t = -der.sum(axis=1) - g_b
        return data, np.concatenate([g_t, g_b])

    def parts(self, t, b):
        d_t = first_difference(t) - self.w_hat
        d_b = first_difference(b) - self.w_hat
        s_t, s_b = second_difference(t), second_difference(b)
        r1 = float(d_t @ d_t + d_b @ d_b)
        r2 = float(s_t @ s_t + s_b @ s_b)
        return (d_t, d_b, s_t, s_b), r1, r2

    def __call__(self, v):
        M = v.size // 2
        t, b = v[:M], v[M:]
        data, g = self.data_term(t, b, with_grad=True)
        (d_t, d_b, s_t, s_b), r1, r2 = self.parts(t, b)
        total = data + self.lambda1 * r1 + self.lambda2 * r2
        g = g + 2.0 * self.lambda1 * np.concatenate([_first_difference_T(d_t), _first_difference_T(d_b)])
        g = g + 2.0 * self.lambda2 * np.concatenate([_second_difference_T(s_t), _second_difference_T(s_b)])
        return total, g

    def report(self, v, iterations=0, converged=True) -> FitReport:
        M = v.size // 2
        t, b = v[:M], v[M:]
        data, _ = self.data_term(t, b)
        _, r1, r2 = self.parts(t, b)
        total = data + self.lambda1 * r1 + self.lambda2 * r2
        return FitReport(total, data, r1, r2, iterations, converged)


def _make(z, cfg: FitConfig, w_hat) -> _Objective:
    zs = smooth_map(as_likelihood(z), cfg.smooth_sigma)
    return _Objective(zs, cfg.lambda1, cfg.lambda2, _w(w_hat))


def objective(grid: LenticuleGrid, z, cfg: FitConfig, w_hat) -> tuple[float, FitReport]:
    """Total fitting objective for ``grid`` on likelihood map ``z`` and its breakdown."""
    obj = _make(z, cfg, w_hat)
    if grid.height != obj.H or grid.width != obj.W:
        raise ValueError("grid and map dimensions differ")
    rep = obj.report(grid.as_vector())
    return rep.objective, rep


def objective_gradient(grid: LenticuleGrid, z, cfg: FitConfig, w_hat) -> np.ndarray:
    """Analytic gradient w.r.t. ``(t, b)``, length ``2 M`` (t first)."""
    obj = _make(z, cfg, w_hat)
    return obj(grid.as_vector())[1]


def column_profile(z) -> np.ndarray:
    return np.asarray(z, dtype=np.float64).mean(axis=0)


def sheared_profile(z, shear: float = 0.0) -> np.ndarray:
    """Column-mean profile after undoing a top-to-bottom drift of ``shear`` px.

    Row ``h`` is sampled (linearly, zero outside) at ``x + shear * (h / (H - 1) - 0.5)``,
    so the profile is registered to the middle row.
    """
    z = np.asarray(z, dtype=np.float64)
    H, W = z.shape
    if shear == 0.0 or H < 2:
        return column_profile(z)
    off = shear * (np.arange(H) / (H - 1) - 0.5)
    k = np.floor(off)
    f = (off - k)[:, None]
    # zero padding wide enough that every sample lands inside: zero outside the frame
    P = int(np.abs(k).max()) + 2
    zp = np.pad(z, ((0, 0), (P, P)))
    idx = (np.arange(H) * (W + 2 * P) + P + k.astype(np.intp))[:, None] + np.arange(W)[None, :]
    vals = (1 - f) * np.take(zp, idx) + f * np.take(zp, idx + 1)
    return vals.mean(axis=0)


def init_grid(z, w: WidthEstimate | float, shear: float = 0.0) -> LenticuleGrid:
    """Starting grid from the peaks of the column-mean profile.

    Peaks closer than ``0.7 w`` are suppressed; gaps wider than ``1.5 w`` get
    equally spaced phantom boundaries so the grid has no holes.  With the
    default ``shear=0`` the grid is vertical; otherwise the profile is taken
    along lines drifting by ``shear`` px from top to bottom (see
    :func:`lenticolor.detect.estimate_shear`) and the grid follows them.
    """
    z = as_likelihood(z)
    H, W = z.shape
    w_hat = _w(w)
    p = sheared_profile(z, shear)
    span = float(p.max() - p.min())
    if span <= 0:
        raise TooFewPeaks("likelihood profile is flat")
    # one zero on each side so a boundary on the first or last column still counts as a peak
    peaks, _ = signal.find_peaks(np.pad(p, 1), distance=max(1.0, 0.7 * w_hat), prominence=0.1 * span)
    pos = peaks.astype(np.float64) - 1.0
    if pos.size >= 2:
        filled = [pos[0]]
        for right in pos[1:]:
            gap = right - filled[-1]
            if gap > 1.5 * w_hat:
                n = max(int(round(gap / w_hat)) - 1, 1)
                left = filled[-1]
                filled.extend(left + gap * np.arange(1, n + 1) / (n + 1))
            filled.append(right)
        pos = np.asarray(filled)
    if shear != 0.0:
        # keep lines that stay inside the frame from top to bottom
        pos = pos[(pos - abs(shear) / 2 >= 0) & (pos + abs(shear) / 2 <= W - 1)]
    if pos.size < MIN_BOUNDARIES:
        raise TooFewPeaks(f"found {pos.size} boundaries, need at least {MIN_BOUNDARIES}")
    return LenticuleGrid(pos - shear / 2, pos + shear / 2, H, W)


def _minimize(obj: _Objective, v0, cfg: FitConfig):
    return optimize.minimize(
        obj, v0, jac=True, method="L-BFGS-B",
        bounds=[(0.0, obj.W - 1.0)] * v0.size,
        options={"maxiter": cfg.max_iters, "gtol": cfg.grad_tol},
    )


def _best_shear(obj: _Objective, v0, step: float):
    """Rotate every line about its midpoint by the common shear with the best data term.

    A vertical start misses the ends of tilted lines by up to half the shear,
    which is outside the attraction basin of a sharp likelihood map.  Lines
    that the chosen shear pushes out of the frame are dropped: they belong to
    lenticules that are not entirely contained in the scan.
    """
    M = v0.size // 2
    mid = 0.5 * (v0[:M] + v0[M:])
    limit = obj.H * math.tan(math.radians(MAX_TILT_DEG))
    rows = np.unique(np.linspace(0, obj.H - 1, min(obj.H, SHEAR_ROWS)).round().astype(np.intp))

    def score(d):
        tt, bb = np.clip(mid - d / 2, 0, obj.W - 1), np.clip(mid + d / 2, 0, obj.W - 1)
        return obj.data_term(tt, bb, rows=rows)[0]

    # coarse pass, then the full step around the few best coarse shears
    coarse = SHEAR_COARSE * step
    grid = np.arange(-limit, limit + coarse / 2, coarse)
    vals = np.array([score(d) for d in grid])
    fine = set()
    for i in np.argsort(vals, kind="stable")[:SHEAR_CANDIDATES]:
        for d in grid[i] + step * np.arange(-SHEAR_COARSE + 1, SHEAR_COARSE):
            if abs(d) <= limit + 1e-9:
                fine.add(round(float(d), 9))
    best_d, best_val = None, obj.data_term(v0[:M], v0[M:], rows=rows)[0]
    for d in sorted(fine):
        val = score(d)
        if val < best_val:
            best_d, best_val = d, val
    if best_d is None:
        return v0, np.ones(M, dtype=bool)
    tt, bb = mid - best_d / 2, mid + best_d / 2
    inside = (np.minimum(tt, bb) >= 0) & (np.maximum(tt, bb) <= obj.W - 1)
    if inside.sum() < MIN_BOUNDARIES:
        inside[:] = True
    return np.concatenate([np.clip(tt[inside], 0, obj.W - 1), np.clip(bb[inside], 0, obj.W - 1)]), inside


def refine_grid(z, init: LenticuleGrid, cfg: FitConfig | None = None,
                w_hat=None, shear_search: bool = True) -> tuple[LenticuleGrid, FitReport]:
    """Fit straight boundaries to ``z`` with bounded L-BFGS starting from ``init``.

    Before the solver runs, the lines are given the common shear that best
    matches the map (``shear_search``).  Lines that leave the frame under that
    shear, or that end up pinned to the frame edge, are dropped and the rest
    re-solved, so the output may have fewer boundaries than ``init``.
    ``w_hat`` defaults to the mean spacing of the initial grid.  The result
    is never worse in objective value than ``init`` restricted to the kept
    lines.  Crossed or over-tilted boundaries raise :class:`IllPosedFit`
    rather than being repaired.
    """
    cfg = cfg or FitConfig()
    if w_hat is None:
        w_hat = 0.5 * (np.diff(init.t).mean() + np.diff(init.b).mean())
    obj = _make(z, cfg, w_hat)
    if (init.height, init.width) != (obj.H, obj.W):
        raise ValueError("initial grid and map dimensions differ")
    v0 = init.as_vector()
    f0, _ = obj(v0)
    if not math.isfinite(f0):
        raise NonFiniteObjective("objective is not finite at the initial grid")
    if shear_search:
        v, keep = _best_shear(obj, v0, SHEAR_STEP)
        if not keep.all():
            # compare against the initial lines that survive
            v0 = np.concatenate([v0[:v0.size // 2][keep], v0[v0.size // 2:][keep]])
            f0, _ = obj(v0)
    else:
        v = v0
    res = _minimize(obj, v, cfg)
    for _ in range(2):
        # a line pinned to the frame edge is a lenticule only partly inside the scan
        M = res.x.size // 2
        t, b = res.x[:M], res.x[M:]
        pinned = (np.minimum(t, b) <= PIN_TOL) | (np.maximum(t, b) >= obj.W - 1 - PIN_TOL)
        if not pinned.any() or M - pinned.sum() < MIN_BOUNDARIES:
            break
        keep = ~pinned
        if v0.size == res.x.size:
            v0 = np.concatenate([v0[:M][keep], v0[M:][keep]])
            f0, _ = obj(v0)
        res = _minimize(obj, np.concatenate([t[keep], b[keep]]), cfg)
    if not math.isfinite(res.fun):
        raise NonFiniteObjective(f"solver returned a non-finite objective ({res.message})")
    v = res.x if res.fun <= f0 else v0
    M = v.size // 2
    t, b = v[:M], v[M:]
    if np.any(np.diff(t) <= 0) or np.any(np.diff(b) <= 0):
        raise IllPosedFit("fitted boundaries cross each other")
    if np.abs(t - b).max() > obj.H * math.tan(math.radians(MAX_TILT_DEG)):
        raise IllPosedFit(f"fitted boundaries tilt beyond {MAX_TILT_DEG} degrees")
    log.debug("refine_grid: %s after %d iterations", res.message, res.nit)
    report = obj.report(v, iterations=int(res.nit), converged=bool(res.success))
    return LenticuleGrid(t, b, obj.H, obj.W), report


def fit_grid(z, w: WidthEstimate | float, cfg: FitConfig | None = None) -> tuple[LenticuleGrid, FitReport]:
    """Estimate the shear, then ``init_grid`` along it, then ``refine_grid``."""
    shear = estimate_shear(z, w)
    return refine_grid(z, init_grid(z, w, shear=shear), cfg, w_hat=w)
