"""Lenticule boundary evidence: a vertical-valley detector and the lenticule width estimate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal, special

from .errors import NoDominantPeak, ScaleOutOfRange
from .raster import as_gray, as_likelihood

MIN_PERIOD = 6.0
MAX_PERIOD = 64.0
CONFIDENCE_THRESHOLD = 4.0
DEFAULT_SCALE = 0.5
# percentile pair used to rescale the raw detector response
RESCALE_PERCENTILES = (0.1, 99.9)
ZERO_CONTRAST = 1e-6
# sub-pixel candidate offsets per pixel, residual damping, splat width (px)
MODEL_PHASES = 4
MODEL_TAU = 0.01
STEP_PENALTY = 2.0
SPLAT_SIGMA = 0.5
MODEL_CHUNK_ROWS = 16
# dip widths tried, as multiples of the detector scale; the best fit wins
DIP_WIDTHS = (0.75, 1.0)
# the dominant period is picked on the profile smoothed by this Gaussian (px)
SELECT_SIGMA = 2.0
PHASE_BAND = 0.15
PHASE_END_ZONE = 0.1
SHEAR_BLOCK_ROWS = 64


@dataclass(frozen=True)
class WidthEstimate:
    w_hat: float
    confidence: float

    def __post_init__(self):
        if not (MIN_PERIOD <= self.w_hat <= MAX_PERIOD):
            raise ValueError(f"width estimate {self.w_hat:.3f} outside [{MIN_PERIOD}, {MAX_PERIOD}] px")
        if not self.confidence > 1:
            raise ValueError("width confidence must exceed 1")


def _model_basis(phase: float, sigma: float, half: int):
    """Orthonormal basis plus dip and step coefficient rows for the window model at ``phase``.

    Columns of the design matrix are a constant, a unit step and a (negated)
    Gaussian dip, all centred at ``phase`` and integrated over each pixel.
    """
    k = np.arange(-half, half + 1) - phase
    step = np.clip(k + 0.5, 0.0, 1.0)
    s2 = math.sqrt(2.0) * sigma
    dip = 0.5 * (special.erf((k + 0.5) / s2) - special.erf((k - 0.5) / s2))
    A = np.stack([np.ones_like(k), step, -dip], axis=1)
    Q, R = np.linalg.qr(A)
    Rinv = np.linalg.inv(R)
    return Q, Rinv[2], Rinv[1]


def valley_model_score(x, scale: float) -> np.ndarray:
    """Unnormalized boundary evidence from a local step-plus-dip model.

    Every 7+ pixel row window is fitted by least squares with a constant, a
    step and a dip centred at one of ``MODEL_PHASES`` sub-pixel offsets; the
    dip width is each of ``DIP_WIDTHS`` times ``scale`` and the best one
    counts, so both crisp one-pixel lines and blurred valleys register.
    A candidate scores ``gamma * exp(-(SSE/SST) / tau)``,
    the fitted dip depth damped by how much of the window variance the model
    leaves unexplained.  The step term absorbs the color change that sits on
    every boundary, which otherwise drags a second-derivative response toward
    the darker side.  A step that falls between two candidate offsets leaves
    a one-pixel residual that looks like a faint dip, so ``gamma`` is first
    reduced by ``STEP_PENALTY * |step| / MODEL_PHASES``; this silences the
    band edges inside a lenticule.  Scores are splatted back onto the pixel
    grid with a narrow Gaussian so the sub-pixel position survives.
    """
    s = ndimage.gaussian_filter1d(np.asarray(x, dtype=np.float64), 4.0 * scale, axis=0, mode="nearest")
    half = max(3, math.ceil(3.0 * scale))
    bases = [[_model_basis(phase, k * scale, half) for k in DIP_WIDTHS]
             for phase in (np.arange(MODEL_PHASES) + 0.5) / MODEL_PHASES - 0.5]
    out = np.empty_like(s)
    # every operation below is horizontal, so row chunks that fit in cache are exact
    for r0 in range(0, s.shape[0], MODEL_CHUNK_ROWS):
        out[r0:r0 + MODEL_CHUNK_ROWS] = _model_rows(s[r0:r0 + MODEL_CHUNK_ROWS], bases, half)
    return out


def _model_rows(s, bases, half):
    n = 2 * half + 1
    ones = np.ones(n)
    s1 = ndimage.correlate1d(s, ones, axis=1, mode="nearest")
    s2 = ndimage.correlate1d(s * s, ones, axis=1, mode="nearest")
    # residual after the constant alone, and the damping factor per unit residual
    rest = s2 - s1 * s1 / n
    damp = -1.0 / (MODEL_TAU * np.maximum(rest, 1e-12))
    out = np.zeros_like(s)
    offsets = np.arange(-2, 3)
    phases = (np.arange(MODEL_PHASES) + 0.5) / MODEL_PHASES - 0.5
    for phase, per_width in zip(phases, bases):
        score = np.zeros_like(s)
        # the step column is orthogonalized before the dip, so it is shared by all widths
        p1 = ndimage.correlate1d(s, per_width[0][0][:, 1], axis=1, mode="nearest")
        rest1 = rest - p1 * p1
        for Q, coef, step_coef in per_width:
            gamma = ndimage.correlate1d(s, Q @ coef, axis=1, mode="nearest")
            beta = ndimage.correlate1d(s, Q @ step_coef, axis=1, mode="nearest")
            sse = ndimage.correlate1d(s, Q[:, 2], axis=1, mode="nearest")
            np.abs(beta, out=beta)
            beta *= STEP_PENALTY / MODEL_PHASES
            gamma -= beta
            np.maximum(gamma, 0.0, out=gamma)
            np.multiply(sse, sse, out=sse)
            np.subtract(rest1, sse, out=sse)
            np.maximum(sse, 0.0, out=sse)
            sse *= damp
            np.exp(sse, out=sse)
            gamma *= sse
            np.maximum(score, gamma, out=score)
        # candidate at j + phase feeds pixel j + d with weight K(d - phase)
        kernel = np.exp(-0.5 * ((offsets - phase) / SPLAT_SIGMA) ** 2)
        out += ndimage.correlate1d(score, kernel[::-1], axis=1, mode="constant")
    return out


def second_derivative_score(x, scale: float) -> np.ndarray:
    """Positive part of the horizontal second derivative of the smoothed negative image."""
    s = ndimage.gaussian_filter(-np.asarray(x, dtype=np.float64), sigma=(4.0 * scale, scale),
                                order=(0, 2), mode="nearest")
    return np.maximum(-s, 0.0)


def detect_ridges(scan, scale: float = DEFAULT_SCALE, method: str = "model") -> np.ndarray:
    """Likelihood in [0, 1] that a pixel lies on a dark near-vertical boundary line.

    ``method="model"`` (default) uses :func:`valley_model_score`;
    ``method="hessian"`` is the plain second-derivative-of-Gaussian ridge
    filter, kept for comparison.  Both smooth vertically with ``4 * scale``.
    The response is rescaled by its 0.1 / 99.9 percentiles and clipped; a
    response without contrast gives all zeros.
    """
    if not 0.5 <= scale <= 5.0:
        raise ScaleOutOfRange(f"detector scale {scale} outside [0.5, 5] px")
    x = as_gray(scan)
    if method == "model":
        r = valley_model_score(x, scale)
    elif method == "hessian":
        r = second_derivative_score(x, scale)
    else:
        raise ValueError(f"unknown detector method {method!r}")
    lo, hi = np.percentile(r, RESCALE_PERCENTILES)
    if hi - lo < ZERO_CONTRAST:
        return np.zeros_like(r)
    return np.clip((r - lo) / (hi - lo), 0.0, 1.0)


def _row_blocks(H: int, n_blocks: int):
    """Equal row blocks, half anchored at the top and half at the bottom.

    Anchoring keeps the partition mirror-symmetric, so a vertically flipped map
    yields the same set of blocks.
    """
    if n_blocks <= 1:
        return [slice(0, H)]
    L = H // n_blocks
    half = n_blocks // 2
    top = [slice(i * L, (i + 1) * L) for i in range(half)]
    bottom = [slice(H - (i + 1) * L, H - i * L) for i in reversed(range(half))]
    return top + bottom


def _default_blocks(H: int) -> int:
    n = min(16, H // 32)
    return n - n % 2


def profile_power(z, n_blocks: int | None = None) -> np.ndarray:
    """Hann-windowed power spectrum of column-mean profiles, averaged over row blocks.

    With ``n_blocks=1`` this is the periodogram of the full column-mean profile.
    By default the rows are cut into up to 16 (even) blocks of at least 32 rows;
    averaging their periodograms flattens the noise floor without moving the peak.
    """
    z = np.asarray(z, dtype=np.float64)
    H, W = z.shape
    if n_blocks is None:
        n_blocks = _default_blocks(H)
    window = np.hanning(W)
    power = np.zeros(W // 2 + 1)
    blocks = _row_blocks(H, max(n_blocks, 1))
    for rows in blocks:
        p = z[rows].mean(axis=0)
        p = (p - p.mean()) * window
        power += np.abs(np.fft.rfft(p)) ** 2
    return power / len(blocks)


def _phase_period(z, k0: float, n_blocks: int | None) -> float | None:
    """Mean period from the phase advance of the demodulated profile near bin ``k0``.

    Each row block's profile is band-passed to ``k0 * (1 +- PHASE_BAND)``.  The
    unwrapped phase of the analytic signal, averaged (amplitude-squared
    weights) over a zone of 10% of the width at each end of the span (5%
    margins dropped), gives the number of periods between the zones.  Block
    slopes are averaged with their total weight.  This counts lenticules
    rather than fitting a spectral line, so a width that drifts across the
    frame still yields its mean.
    """
    H, W = z.shape
    x = np.arange(W, dtype=np.float64)
    freq = np.fft.fftfreq(W) * W
    keep = (freq >= k0 * (1 - PHASE_BAND)) & (freq <= k0 * (1 + PHASE_BAND))
    window = signal.windows.tukey(W, 0.2)
    inner = (x >= 0.05 * W) & (x <= 0.95 * W)
    num = den = 0.0
    for rows in _row_blocks(H, _default_blocks(H) if n_blocks is None else n_blocks):
        p = z[rows].mean(axis=0)
        a = np.fft.ifft(np.where(keep, np.fft.fft((p - p.mean()) * window), 0.0))
        wt = np.abs(a) ** 2 * inner
        if wt.sum() <= 0:
            continue
        phase = np.unwrap(np.angle(a))
        # mean frequency over the span = phase advance between its two end zones
        zone = np.flatnonzero(inner)
        n_end = max(2, int(PHASE_END_ZONE * W))
        lo_zone, hi_zone = zone[:n_end], zone[-n_end:]
        w_lo, w_hi = wt[lo_zone], wt[hi_zone]
        if w_lo.sum() <= 0 or w_hi.sum() <= 0:
            continue
        x0, x1 = np.average(x[lo_zone], weights=w_lo), np.average(x[hi_zone], weights=w_hi)
        p0, p1 = np.average(phase[lo_zone], weights=w_lo), np.average(phase[hi_zone], weights=w_hi)
        slope = (p1 - p0) / (x1 - x0)
        num += slope * wt.sum()
        den += wt.sum()
    if den <= 0 or num <= 0:
        return None
    return 2.0 * np.pi * den / num


def estimate_width(z, threshold: float = CONFIDENCE_THRESHOLD, n_blocks: int | None = None) -> WidthEstimate:
    """Average lenticule width from the dominant horizontal period of a likelihood map.

    The candidate bin maximizes the block-averaged power of the column profile
    smoothed by a 2 px Gaussian (boundary lines are narrow, so their harmonics
    are nearly as strong as the fundamental).  Confidence is the raw power at
    that bin over the median raw power.  The period is first interpolated from
    the log-power parabola, then refined by the phase slope.
    """
    z = as_likelihood(z)
    W = z.shape[1]
    power = profile_power(z, n_blocks)
    k_lo = max(1, math.ceil(W / MAX_PERIOD))
    k_hi = min(len(power) - 2, math.floor(W / MIN_PERIOD))
    if k_hi < k_lo:
        raise NoDominantPeak(f"map width {W} too small to resolve periods in [{MIN_PERIOD}, {MAX_PERIOD}]")
    bins = np.arange(k_lo, k_hi + 1)
    smoothed = power[bins] * np.exp(-(2 * np.pi * SELECT_SIGMA * bins / W) ** 2)
    k = int(bins[np.argmax(smoothed)])
    floor = np.median(power[1:])
    peak = power[k]
    confidence = peak / floor if floor > 0 else (math.inf if peak > 0 else 0.0)
    if not confidence > threshold:
        raise NoDominantPeak(f"spectral peak/median ratio {confidence:.2f} <= {threshold}")

    tiny = np.finfo(float).tiny
    a, b, c = np.log(np.maximum(power[k - 1:k + 2], tiny))
    denom = a - 2 * b + c
    delta = 0.5 * (a - c) / denom if denom < 0 else 0.0
    k_frac = k + float(np.clip(delta, -0.5, 0.5))
    w_hat = W / k_frac
    refined = _phase_period(z, k_frac, n_blocks)
    if refined is not None and abs(refined - w_hat) < 0.1 * w_hat:
        w_hat = refined
    if not MIN_PERIOD <= w_hat <= MAX_PERIOD:
        raise NoDominantPeak(f"dominant period {w_hat:.2f} px outside [{MIN_PERIOD}, {MAX_PERIOD}]")
    return WidthEstimate(float(w_hat), float(confidence))


def estimate_shear(z, w_hat, rows_per_block: int = SHEAR_BLOCK_ROWS) -> float:
    """Horizontal drift of the lenticule pattern from the top row to the bottom row, in px.

    The column-mean profile of every block of ``rows_per_block`` rows is
    demodulated at the period ``w_hat``; a shift by ``d`` px turns its phase by
    ``-2 pi d / w_hat``, so phase changes between neighboring blocks give the
    per-block drift (unambiguous while it stays under half a period).  Drifts
    are averaged with weights |c_i||c_i+1| and scaled to the full height.
    """
    z = as_likelihood(z)
    H, W = z.shape
    w = float(getattr(w_hat, "w_hat", w_hat))
    n = max(2, H // rows_per_block)
    edges = np.linspace(0, H, n + 1).round().astype(int)
    carrier = np.hanning(W) * np.exp(-2j * np.pi * np.arange(W) / w)
    coef = np.empty(n, dtype=complex)
    for i in range(n):
        p = z[edges[i]:edges[i + 1]].mean(axis=0)
        coef[i] = (p - p.mean()) @ carrier
    centers = 0.5 * (edges[:-1] + edges[1:] - 1)
    turn = np.angle(coef[1:] * np.conj(coef[:-1]))
    weight = np.abs(coef[1:]) * np.abs(coef[:-1])
    if weight.sum() <= 0:
        return 0.0
    drift = -turn * w / (2.0 * np.pi)
    slope = np.sum(weight * drift) / np.sum(weight * np.diff(centers))
    return float(slope * (H - 1))
