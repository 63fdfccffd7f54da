import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lenticolor.detect import detect_ridges, estimate_width
from lenticolor.errors import IllPosedFit, TooFewPeaks
from lenticolor.fit import (FitConfig, fit_grid, init_grid, objective, objective_gradient,
                            refine_grid, regularizer_r1, regularizer_r2)
from lenticolor.raster import LenticuleGrid
from lenticolor.simulate import SimParams, grid_error, random_source, render_scan

NO_REG = FitConfig(lambda1=0.0, lambda2=0.0)


def vgrid(pos, H=64, W=64):
    return LenticuleGrid(pos, pos, H, W)


def D_matrix(M):
    D = np.zeros((M - 1, M))
    D[np.arange(M - 1), np.arange(M - 1)] = -1
    D[np.arange(M - 1), np.arange(1, M)] = 1
    return D


def H_matrix(M):
    Hm = np.zeros((M - 2, M))
    i = np.arange(M - 2)
    Hm[i, i], Hm[i, i + 1], Hm[i, i + 2] = 1, -2, 1
    return Hm


def fd_gradient(grid, z, cfg, w, h=1e-4):
    v = grid.as_vector()
    M = grid.M
    g = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        up, dn = v + e, v - e
        fu = objective(LenticuleGrid(up[:M], up[M:], grid.height, grid.width, False), z, cfg, w)[0]
        fd = objective(LenticuleGrid(dn[:M], dn[M:], grid.height, grid.width, False), z, cfg, w)[0]
        g[i] = (fu - fd) / (2 * h)
    return g


# regularizers ---------------------------------------------------------------

def test_r1_zero_on_exact_uniform_grid():
    w = 10.0
    g = vgrid(np.arange(4) * w)
    assert regularizer_r1(g, w) == 0.0


def test_r1_hand_value():
    g = vgrid([0.0, 10.0, 21.0])
    assert regularizer_r1(g, 10.0) == pytest.approx(2.0, abs=1e-12)


def test_r1_grows_when_grid_is_stretched():
    rng = np.random.default_rng(0)
    pos = np.cumsum(rng.uniform(8, 12, 6))
    g = LenticuleGrid(pos, pos, 64, 200)
    stretched = LenticuleGrid(2 * pos, 2 * pos, 64, 200)
    assert regularizer_r1(stretched, 10.0) > regularizer_r1(g, 10.0)


def test_r2_hand_value_and_progressions():
    g = LenticuleGrid([0.0, 10.0, 22.0], [0.0, 10.0, 20.0], 64, 64)
    assert regularizer_r2(g) == pytest.approx(4.0, abs=1e-12)
    assert regularizer_r2(LenticuleGrid([1.0, 4.0, 7.0, 10.0], [2.0, 7.0, 12.0, 17.0], 1000, 64)) == 0.0


@given(st.lists(st.floats(1, 20), min_size=3, max_size=12), st.floats(-0.5, 0.5))
def test_regularizers_match_matrix_forms(steps, offset):
    t = 1.0 + np.cumsum(steps)
    b = t + offset
    W = b.max() + 5
    g = LenticuleGrid(t, b, 2000, W)
    M = t.size
    D, Hm = D_matrix(M), H_matrix(M)
    w = 7.5
    r1 = np.sum((D @ t - w) ** 2) + np.sum((D @ b - w) ** 2)
    r2 = np.sum((Hm @ t) ** 2) + np.sum((Hm @ b) ** 2)
    assert regularizer_r1(g, w) == pytest.approx(r1, rel=1e-12, abs=1e-12)
    assert regularizer_r2(g) == pytest.approx(r2, rel=1e-12, abs=1e-9)


@given(st.lists(st.floats(2, 20), min_size=3, max_size=10), st.floats(0, 30))
def test_r2_ignores_constant_offset(steps, c):
    t = np.cumsum(steps)
    W = t.max() + c + 5
    a = LenticuleGrid(t, t, 100, W)
    b = LenticuleGrid(t + c, t + c, 100, W)
    assert regularizer_r2(a) == pytest.approx(regularizer_r2(b), rel=1e-9, abs=1e-9)


# objective ------------------------------------------------------------------

def test_data_term_of_unit_map_counts_samples():
    z = np.ones((40, 64))
    g = LenticuleGrid([0.0, 10.5, 33.2, 63.0], [0.7, 11.0, 33.0, 62.4], 40, 64)
    _, rep = objective(g, z, NO_REG, 10.0)
    assert rep.data == pytest.approx(-4 * 40, abs=1e-9)


def test_delta_columns_hit_and_miss():
    z = np.zeros((32, 64))
    z[:, 8::16] = 1.0
    cfg = FitConfig(0.0, 0.0, smooth_sigma=0.0)
    g = LenticuleGrid([8.0, 24, 40, 56], [8.0, 24, 40, 56], 32, 64)
    assert objective(g, z, cfg, 16)[1].data == pytest.approx(-4 * 32, abs=1e-9)
    assert objective(g.shifted(1.0), z, cfg, 16)[1].data == pytest.approx(0.0, abs=1e-9)


def test_uniform_grid_on_uniform_map_has_no_regularization():
    z = np.full((32, 96), 0.5)
    g = vgrid(np.arange(5) * 16.0 + 10, 32, 96)
    total, rep = objective(g, z, FitConfig(), 16.0)
    assert rep.r1 == 0.0 and rep.r2 == 0.0
    assert total == rep.data


def test_objective_decomposition(rng):
    z = rng.uniform(size=(50, 120))
    g = LenticuleGrid([5.0, 22.0, 41.0, 55.5, 80.0], [6.0, 21.0, 40.0, 57.0, 81.0], 50, 120)
    cfg = FitConfig(lambda1=1.3, lambda2=7.0)
    total, rep = objective(g, z, cfg, 17.0)
    assert total == pytest.approx(rep.data + 1.3 * rep.r1 + 7.0 * rep.r2, rel=1e-8)


def test_gradient_vanishes_on_constant_map():
    g = LenticuleGrid([0.0, 12.3, 30.0, 63.0], [0.5, 12.0, 31.0, 62.0], 64, 64)
    assert np.abs(objective_gradient(g, np.full((64, 64), 0.7), NO_REG, 10.0)).max() < 1e-12


def test_gradient_of_displaced_boundary_by_hand():
    w = 10.0
    t = np.arange(6) * w + 5
    t[2] += 2.0
    g = vgrid(t, 64, 64)
    cfg = FitConfig(lambda1=1.0, lambda2=0.0)
    D = D_matrix(6)
    expect = 2 * D.T @ (D @ t - w)
    grad = objective_gradient(g, np.ones((64, 64)), cfg, w)
    assert np.allclose(grad[:6], expect, atol=1e-10)
    assert np.allclose(grad[6:], expect, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    r = np.random.default_rng(seed)
    z = r.uniform(size=(64, 64))
    t = np.sort(r.uniform(2, 62, 5))
    t = t[0] + np.cumsum(np.r_[0, np.maximum(np.diff(t), 1.0)]) * 0.9
    b = np.clip(t + r.uniform(-1.5, 1.5, t.size), 0.5, 63.5)
    b = np.sort(b)
    g = LenticuleGrid(t, b, 64, 64)
    cfg = FitConfig(lambda1=1.0, lambda2=10.0)
    ga = objective_gradient(g, z, cfg, 12.0)
    gn = fd_gradient(g, z, cfg, 12.0)
    assert np.all(np.abs(ga - gn) <= 1e-5 * np.maximum(np.abs(gn), 1.0))


# initialization -------------------------------------------------------------

def _peak_map(centers, H=32, W=256):
    x = np.arange(W)
    prof = np.zeros(W)
    for c in centers:
        prof += np.exp(-0.5 * (x - c) ** 2)
    return np.tile(np.clip(prof, 0, 1), (H, 1))


def test_init_on_clean_peaks():
    centers = np.arange(8, 256, 16)
    g = init_grid(_peak_map(centers), 16.0)
    assert g.M == 16
    assert np.allclose(g.t, centers) and np.allclose(g.b, centers)


def test_init_fills_gaps():
    centers = np.arange(8, 256, 16)
    kept = centers[(centers != 104) & (centers != 120)]
    g = init_grid(_peak_map(kept), 16.0)
    assert g.M == 16
    assert np.min(np.abs(g.t - 104)) <= 1 and np.min(np.abs(g.t - 120)) <= 1


def test_init_on_empty_map():
    with pytest.raises(TooFewPeaks):
        init_grid(np.zeros((32, 64)), 16.0)


def test_init_min_separation():
    # two peaks closer than 0.7 w collapse to one
    g = init_grid(_peak_map([20, 26, 60, 100, 140, 180]), 40.0)
    assert g.M == 5


# refinement -----------------------------------------------------------------

def _scene(seed=0, tilt=0.8, size=512):
    p = SimParams(tilt=tilt, seed=seed)
    return render_scan(random_source(size, size, seed), p)


def test_refine_recovers_simulated_grid():
    sc = _scene(seed=4, tilt=0.8)
    z = detect_ridges(sc.scan)
    w = estimate_width(z)
    g, rep = fit_grid(z, w)
    assert grid_error(sc.truth_grid, g)["rms"] < 0.5
    assert rep.objective == pytest.approx(rep.data + rep.r1 + 10 * rep.r2, rel=1e-8)


def _ideal_map(grid, sigma=0.7):
    x = np.arange(grid.width)[None, :, None]
    X = grid.positions().T[:, None, :]
    return np.exp(-0.5 * ((x - X) / sigma) ** 2).max(axis=2)


def test_refine_from_truth_is_stationary():
    t = 10.0 + 16.0 * np.arange(14)
    truth = LenticuleGrid(t, t + 3.0, 256, 240)
    z = _ideal_map(truth)
    g, rep = refine_grid(z, truth, FitConfig(lambda1=0.0, lambda2=0.0), w_hat=16.0)
    assert g.M == truth.M
    assert rep.iterations <= 3
    assert np.abs(g.as_vector() - truth.as_vector()).max() < 0.05


def test_lower_half_without_evidence():
    sc = _scene(seed=7, tilt=0.6)
    z = detect_ridges(sc.scan)
    w = estimate_width(z)
    z[z.shape[0] // 2:] = 0.0
    g, _ = fit_grid(z, w)
    assert grid_error(sc.truth_grid, g)["rms"] < 0.5


def test_refine_never_worse_than_start():
    sc = _scene(seed=2, tilt=-0.5, size=256)
    z = detect_ridges(sc.scan)
    w = estimate_width(z)
    init = init_grid(z, w)
    g, rep = refine_grid(z, init, w_hat=w, shear_search=False)
    f0, _ = objective(init, z, FitConfig(), w)
    assert rep.objective <= f0 + 1e-9


def test_translation_equivariance():
    t = 20.0 + 16.0 * np.arange(10)
    truth = LenticuleGrid(t + 0.3, t + 2.1, 128, 220)
    z = _ideal_map(truth, 0.9)
    init = LenticuleGrid(t, t, 128, 220)
    cfg = FitConfig()
    g0, _ = refine_grid(z, init, cfg, w_hat=16.0)
    shift = 5
    z1 = np.zeros_like(z)
    z1[:, shift:] = z[:, :-shift]
    g1, _ = refine_grid(z1, init.shifted(shift), cfg, w_hat=16.0)
    assert np.abs(g1.as_vector() - g0.as_vector() - shift).max() <= 1e-3


def test_crossing_lines_are_reported():
    # a map whose evidence pulls two neighbours past each other with no regularization
    H, W = 64, 80
    z = np.zeros((H, W))
    rows = np.arange(H)
    z[rows, np.clip(np.round(30 - 0.1 * rows).astype(int), 0, W - 1)] = 1
    z[rows, np.clip(np.round(40 + 0.1 * rows).astype(int), 0, W - 1)] = 1
    init = LenticuleGrid([10.0, 20.0, 41.0, 50.0, 60.0], [10.0, 20.0, 41.0, 50.0, 60.0], H, W)
    try:
        g, _ = refine_grid(z, init, FitConfig(0.0, 0.0), w_hat=10.0, shear_search=False)
    except IllPosedFit:
        return
    assert np.all(np.diff(g.t) > 0) and np.all(np.diff(g.b) > 0)


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(lambda1=-1)
    with pytest.raises(ValueError):
        FitConfig(max_iters=0)


def test_tilt_geometry_of_fit():
    sc = _scene(seed=11, tilt=1.0, size=384)
    z = detect_ridges(sc.scan)
    g, _ = fit_grid(z, estimate_width(z))
    drift = np.median(g.b - g.t)
    assert drift == pytest.approx(383 * math.tan(math.radians(1.0)), abs=0.5)
