import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal

from conftest import line_image
from lenticolor.detect import (WidthEstimate, detect_ridges, estimate_shear, estimate_width,
                               profile_power)
from lenticolor.errors import NoDominantPeak, ScaleOutOfRange
from lenticolor.simulate import SimParams, random_source, render_scan


def _local_maxima(p):
    idx, _ = signal.find_peaks(p, prominence=0.1 * (p.max() - p.min()))
    return idx


@pytest.mark.parametrize("method", ["model", "hessian"])
def test_vertical_lines_give_column_maxima_on_the_lines(method):
    img, centers = line_image()
    z = detect_ridges(img, method=method)
    peaks = _local_maxima(z.mean(axis=0))
    truth = centers[0]
    assert peaks.size == truth.size
    assert np.abs(peaks - truth).max() <= 0.5


def test_constant_image_gives_zero_map():
    z = detect_ridges(np.full((64, 64), 0.5))
    assert z.max() <= 0.05
    assert not z.any()


def test_tilted_lines_tracked_row_by_row():
    img, centers = line_image(tilt_deg=1.0, first=12)
    z = detect_ridges(img)
    worst = 0.0
    for h in range(0, img.shape[0], 16):
        peaks = _local_maxima(z[h])
        c = centers[h][centers[h] < img.shape[1] - 2]
        d = np.abs(peaks[None, :] - c[:, None]).min(axis=1)
        worst = max(worst, d.max())
    assert worst <= 1.0


def test_scale_bounds():
    img, _ = line_image(64, 64)
    with pytest.raises(ScaleOutOfRange):
        detect_ridges(img, scale=0.4)
    with pytest.raises(ScaleOutOfRange):
        detect_ridges(img, scale=5.5)
    detect_ridges(img, scale=5.0)


def test_map_is_a_likelihood():
    sc = render_scan(random_source(96, 160, 2), SimParams(seed=2))
    z = detect_ridges(sc.scan)
    assert z.shape == sc.scan.shape
    assert z.min() >= 0.0 and z.max() <= 1.0 and z.max() == 1.0


@settings(max_examples=15)
@given(st.floats(0.5, 2.0), st.floats(0.0, 0.2), st.integers(0, 1000))
def test_affine_intensity_invariance(a, c, seed):
    # keep the input narrow so that a*x + c stays inside [0, 1]
    sc = render_scan(random_source(64, 192, seed), SimParams(seed=seed, noise_sigma=0.005))
    x = 0.15 + 0.25 * sc.scan
    z0 = detect_ridges(x)
    z1 = detect_ridges(a * x + c)
    assert np.abs(z0 - z1).max() <= 1e-6


@pytest.mark.parametrize("H", [16, 64, 301])
def test_width_of_cosine_profile(H):
    x = np.arange(512)
    z = np.tile(0.5 + 0.5 * np.cos(2 * np.pi * x / 16), (H, 1))
    w = estimate_width(z)
    assert abs(w.w_hat - 16) <= 0.1
    assert w.confidence > 4


def test_width_of_noninteger_period():
    x = np.arange(700)
    z = np.tile(0.5 + 0.5 * np.cos(2 * np.pi * x / 14.3), (32, 1))
    assert abs(estimate_width(z).w_hat - 14.3) <= 0.1


def test_white_noise_has_no_dominant_peak():
    misses = 0
    for seed in range(30):
        z = np.random.default_rng(seed).uniform(size=(128, 256))
        try:
            estimate_width(z)
        except NoDominantPeak:
            misses += 1
    assert misses >= 28


def test_simulated_width_14_3():
    p = SimParams(mean_width=14.3, tilt=0.6, seed=5)
    sc = render_scan(random_source(256, 400, 5), p)
    w = estimate_width(detect_ridges(sc.scan))
    assert abs(w.w_hat - 14.3) <= 0.3


def test_width_flip_invariance():
    sc = render_scan(random_source(200, 300, 1), SimParams(seed=1, tilt=0.9))
    z = detect_ridges(sc.scan)
    assert estimate_width(z).w_hat == pytest.approx(estimate_width(z[::-1]).w_hat, abs=1e-9)


def test_width_estimate_invariants():
    with pytest.raises(ValueError):
        WidthEstimate(5.0, 10.0)
    with pytest.raises(ValueError):
        WidthEstimate(16.0, 1.0)


def test_profile_power_is_nonnegative():
    z = np.random.default_rng(0).uniform(size=(64, 128))
    assert profile_power(z).min() >= 0


@pytest.mark.parametrize("tilt", [-1.0, 0.0, 0.7])
def test_shear_estimate(tilt):
    p = SimParams(tilt=tilt, seed=3)
    sc = render_scan(random_source(512, 512, 3), p)
    z = detect_ridges(sc.scan)
    w = estimate_width(z)
    truth = 511 * math.tan(math.radians(tilt))
    assert abs(estimate_shear(z, w) - truth) < 1.5
