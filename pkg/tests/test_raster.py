import os
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from lenticolor.errors import (BadMagic, DimensionMismatch, GridInvariantError, NonFiniteValue,
                               RangeViolation, SimplexViolation)
from lenticolor.raster import (LenticuleGrid, StripeImage, as_gray, as_likelihood, normalize_intensity,
                               read_grid, read_raster, validate_coeffs, write_grid, write_raster)


def test_zero_map_round_trip_is_bitwise(tmp_path):
    p = tmp_path / "z.lfr"
    z = np.zeros((16, 16))
    write_raster(p, z, "likelihood")
    back = read_raster(p, "likelihood")
    assert back.tobytes() == z.tobytes()


def test_file_size_matches_layout(tmp_path):
    p = tmp_path / "small.lfr"
    write_raster(p, np.full((3, 3), 0.25), "gray")
    # 4 magic + 1 dtype + 1 kind + 2 reserved + 2 * 4 dims, then 9 float32
    assert os.path.getsize(p) == (4 + 1 + 1 + 2 + 4 + 4) + 9 * 4


def test_header_fields(tmp_path):
    p = tmp_path / "h.lfr"
    write_raster(p, np.zeros((9, 11)), "likelihood")
    raw = p.read_bytes()
    assert raw[:4] == b"LFR1"
    assert raw[4] == 0x01 and raw[5] == 0x02 and raw[6:8] == b"\x00\x00"
    assert struct.unpack("<II", raw[8:16]) == (9, 11)
    payload = np.frombuffer(raw[16:], dtype="<f4")
    assert payload.size == 99


def test_coeff_header_has_inner_field(tmp_path):
    p = tmp_path / "c.lfr"
    w = np.full((2, 3, 3, 6), 1 / 6)
    write_raster(p, w, "coeff")
    raw = p.read_bytes()
    assert raw[5] == 0x03
    assert struct.unpack("<I", raw[16:20]) == (18,)
    assert len(raw) == 20 + 2 * 3 * 18 * 4


def test_nan_is_refused(tmp_path):
    z = np.zeros((8, 8))
    z[3, 3] = np.nan
    with pytest.raises(NonFiniteValue):
        write_raster(tmp_path / "n.lfr", z, "likelihood")


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.lfr"
    write_raster(p, np.zeros((8, 8)), "likelihood")
    p.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(BadMagic):
        read_raster(p)


def test_out_of_range_likelihood(tmp_path):
    p = tmp_path / "r.lfr"
    z = np.zeros((8, 8))
    z[0, 0] = 1.5
    write_raster(p, z, "likelihood")
    with pytest.raises(RangeViolation):
        read_raster(p, "likelihood")


def test_coeff_sum_slightly_off_is_renormalized(tmp_path):
    p = tmp_path / "c.lfr"
    w = np.full((4, 5, 3, 6), 1.0005 / 6)
    write_raster(p, w, "coeff")
    back = read_raster(p, "coeff")
    assert np.abs(back.sum(axis=-1) - 1).max() <= 1e-9


def test_coeff_sum_far_off_is_rejected(tmp_path):
    p = tmp_path / "c.lfr"
    write_raster(p, np.full((4, 5, 3, 6), 1.01 / 6), "coeff")
    with pytest.raises(SimplexViolation):
        read_raster(p, "coeff")


def test_negative_weight_is_rejected():
    w = np.full((2, 2, 3, 6), 1 / 6)
    w[0, 0, 0, :2] = [-0.1, 1 / 6 + 0.1]
    with pytest.raises(SimplexViolation):
        validate_coeffs(w)


def test_kind_and_shape_checks(tmp_path):
    p = tmp_path / "k.lfr"
    write_raster(p, np.zeros((8, 9)), "gray")
    with pytest.raises(DimensionMismatch):
        read_raster(p, "likelihood")
    with pytest.raises(DimensionMismatch):
        read_raster(p, "gray", shape=(9, 8))


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.lfr"
    write_raster(p, np.zeros((8, 8)), "gray")
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(DimensionMismatch):
        read_raster(p)


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, min_side=8, max_side=20),
                  elements=st.floats(0, 1, width=32)))
def test_round_trip_preserves_bits(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("rt") / "a.lfr"
    write_raster(p, a, "gray")
    back = read_raster(p, "gray")
    assert back.astype(np.float32).tobytes() == a.tobytes()


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_coeff_round_trip_sums_to_one(tmp_path_factory, h, w, seed):
    r = np.random.default_rng(seed)
    c = r.uniform(0, 1, (h, w, 3, 6))
    c /= c.sum(axis=-1, keepdims=True)
    p = tmp_path_factory.mktemp("c") / "c.lfr"
    write_raster(p, c, "coeff")
    back = read_raster(p, "coeff")
    assert np.abs(back.sum(axis=-1) - 1).max() <= 1e-9
    assert np.abs(back - c).max() < 1e-6


def test_integer_normalization():
    assert normalize_intensity(np.array([0, 255], np.uint8)).tolist() == [0.0, 1.0]
    assert normalize_intensity(np.array([65535], np.uint16))[0] == 1.0
    assert as_gray(np.full((8, 8), 128, np.uint8))[0, 0] == pytest.approx(128 / 255)


def test_gray_validation():
    with pytest.raises(DimensionMismatch):
        as_gray(np.zeros((7, 8)))
    with pytest.raises(RangeViolation):
        as_gray(np.full((8, 8), 1.2))
    with pytest.raises(NonFiniteValue):
        as_likelihood(np.full((8, 8), np.inf))


def test_grid_invariants():
    LenticuleGrid([1, 5, 9], [2, 6, 10], 100, 20)
    with pytest.raises(GridInvariantError):
        LenticuleGrid([1, 5, 5], [2, 6, 10], 100, 20)
    with pytest.raises(GridInvariantError):
        LenticuleGrid([-0.1, 5, 9], [2, 6, 10], 100, 20)
    with pytest.raises(GridInvariantError):
        LenticuleGrid([1, 5, 9], [2, 6, 19.5], 100, 20)
    # 100 * tan(2 deg) = 3.49 px of allowed drift
    LenticuleGrid([1, 5, 9], [4.4, 8.4, 12.4], 100, 20)
    with pytest.raises(GridInvariantError):
        LenticuleGrid([1, 5, 9], [4.6, 8.6, 12.6], 100, 20)


def test_grid_positions_interpolate_rows():
    g = LenticuleGrid([2.0, 10.0], [4.0, 11.0], 101, 20)
    X = g.positions()
    assert X[:, 0].tolist() == [2.0, 10.0]
    assert X[:, -1].tolist() == [4.0, 11.0]
    assert X[0, 50] == pytest.approx(3.0)


def test_grid_is_immutable():
    g = LenticuleGrid([1, 5], [1, 5], 10, 10)
    with pytest.raises(ValueError):
        g.t[0] = 2.0


def test_lgrid_text_format(tmp_path):
    g = LenticuleGrid([1.25, 17.5], [1.5, 17.0], 64, 32)
    p = tmp_path / "g.lgrid"
    write_grid(p, g)
    lines = p.read_text().splitlines()
    assert lines[0] == "LGRID 2 64 32"
    assert lines[1] == "1.250000 1.500000"
    back = read_grid(p)
    assert np.array_equal(back.t, g.t) and np.array_equal(back.b, g.b)
    assert (back.height, back.width) == (64, 32)


def test_lgrid_errors(tmp_path):
    p = tmp_path / "g.lgrid"
    p.write_text("GRID 1 8 8\n1 1\n")
    with pytest.raises(BadMagic):
        read_grid(p)
    p.write_text("LGRID 3 8 8\n1 1\n2 2\n")
    with pytest.raises(DimensionMismatch):
        read_grid(p)


def test_stripe_image_contract():
    v = np.arange(12, dtype=float).reshape(2, 6) / 12
    s = StripeImage(v, (2, 0, 1))
    assert s.column_channels().tolist() == [2, 0, 1, 2, 0, 1]
    assert s.channel_columns(0).tolist() == [1, 4]
    rgb = s.to_rgb()
    assert rgb[0, 1, 0] == v[0, 1] and np.isnan(rgb[0, 1, 1])
    with pytest.raises(DimensionMismatch):
        StripeImage(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        StripeImage(np.zeros((2, 6)), (0, 0, 1))
