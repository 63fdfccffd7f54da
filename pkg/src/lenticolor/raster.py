"""Raster value types, intensity normalization and the LFR binary format.

Gray scans and likelihood maps are plain 2-D float arrays validated by
:func:`as_gray` / :func:`as_likelihood`.  Lenticule grids and stripe images
carry extra geometry, so they get small frozen dataclasses.

LFR layout (little endian)::

    0-3   b"LFR1"
    4     dtype code, 0x01 = float32
    5     kind code, 0x01 gray, 0x02 likelihood, 0x03 coeff tensor
    6-7   reserved, zero
    8-11  height (u32)
    12-15 width (u32)
    16-19 inner = 18 (coeff tensors only)
    ...   row-major float32 payload
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadMagic, DimensionMismatch, GridInvariantError,
                     NonFiniteValue, RangeViolation, SimplexViolation)

MAGIC = b"LFR1"
DTYPE_FLOAT32 = 0x01
KIND_CODES = {"gray": 0x01, "likelihood": 0x02, "coeff": 0x03}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
COEFF_INNER = 18  # 3 channels x 6 weights
HEADER = struct.Struct("<4sBBxxII")
INNER = struct.Struct("<I")

MIN_SIDE = 8
SIMPLEX_LOAD_TOL = 1e-3
MAX_TILT_DEG = 2.0
CHANNELS = "RGB"


def normalize_intensity(img) -> np.ndarray:
    """Map integer images to [0, 1] by dividing by the dtype maximum."""
    img = np.asarray(img)
    if np.issubdtype(img.dtype, np.integer):
        return img.astype(np.float64) / np.iinfo(img.dtype).max
    if img.dtype == np.bool_:
        return img.astype(np.float64)
    return img.astype(np.float64, copy=False)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)  # own copy
    a.flags.writeable = False
    return a


def _check_2d(a: np.ndarray, what: str) -> None:
    if a.ndim != 2:
        raise DimensionMismatch(f"{what} must be 2-D, got shape {a.shape}")
    if a.shape[0] < MIN_SIDE or a.shape[1] < MIN_SIDE:
        raise DimensionMismatch(f"{what} must be at least {MIN_SIDE}x{MIN_SIDE}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue(f"{what} contains non-finite values")


def _check_unit_range(a: np.ndarray, what: str) -> None:
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise RangeViolation(f"{what} values must lie in [0, 1] (got {a.min():g}..{a.max():g})")


def as_gray(img) -> np.ndarray:
    """Validate (and normalize) a grayscale scan; returns a float64 H x W array."""
    a = normalize_intensity(img)
    _check_2d(a, "gray raster")
    _check_unit_range(a, "gray raster")
    return a


def as_likelihood(z, shape: tuple[int, int] | None = None) -> np.ndarray:
    a = np.asarray(z, dtype=np.float64)
    _check_2d(a, "likelihood map")
    _check_unit_range(a, "likelihood map")
    if shape is not None and a.shape != tuple(shape):
        raise DimensionMismatch(f"likelihood map has shape {a.shape}, expected {tuple(shape)}")
    return a


def validate_coeffs(w, tol: float = SIMPLEX_LOAD_TOL) -> np.ndarray:
    """Check a (H, W, 3, 6) weight tensor and renormalize each simplex to sum 1."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4 or w.shape[2:] != (3, 6):
        raise DimensionMismatch(f"coefficient tensor must have shape (H, W, 3, 6), got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NonFiniteValue("coefficient tensor contains non-finite values")
    if w.size and w.min() < 0:
        raise SimplexViolation("negative interpolation weight")
    s = w.sum(axis=-1, keepdims=True)
    if w.size and np.abs(s - 1.0).max() > tol:
        raise SimplexViolation(f"weight sums deviate from 1 by up to {np.abs(s - 1.0).max():.3g}")
    return w / s


@dataclass(frozen=True)
class LenticuleGrid:
    """Straight lenticule boundaries given by their x position on the top and bottom rows."""

    t: np.ndarray
    b: np.ndarray
    height: int
    width: int
    check_tilt: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        t = _frozen(np.ravel(self.t))
        b = _frozen(np.ravel(self.b))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "b", b)
        if t.shape != b.shape:
            raise GridInvariantError("t and b must have the same length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(b))):
            raise NonFiniteValue("grid positions must be finite")
        if t.size and (np.any(np.diff(t) <= 0) or np.any(np.diff(b) <= 0)):
            raise GridInvariantError("boundary positions must be strictly increasing")
        lo, hi = 0.0, self.width - 1.0
        if t.size and (min(t.min(), b.min()) < lo or max(t.max(), b.max()) > hi):
            raise GridInvariantError(f"boundary positions must lie within [0, {hi:g}]")
        if self.check_tilt and t.size:
            limit = self.height * math.tan(math.radians(MAX_TILT_DEG))
            if np.abs(t - b).max() > limit:
                raise GridInvariantError(f"boundary tilt exceeds {MAX_TILT_DEG} degrees")

    @property
    def M(self) -> int:
        return self.t.size

    def positions(self, rows=None) -> np.ndarray:
        """x positions of every boundary on the given rows, shape (M, len(rows))."""
        H = self.height
        h = np.arange(H, dtype=np.float64) if rows is None else np.asarray(rows, dtype=np.float64)
        frac = h / (H - 1)
        return self.t[:, None] + frac[None, :] * (self.b - self.t)[:, None]

    def shifted(self, dx: float) -> "LenticuleGrid":
        return LenticuleGrid(self.t + dx, self.b + dx, self.height, self.width, self.check_tilt)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.t, self.b])


@dataclass(frozen=True)
class StripeImage:
    """Stripe-encoded color image with one valid channel per column.

    ``values[h, c]`` holds channel ``channel_order[c % 3]`` (an index into RGB).
    ``source_width`` is the width of the scan the stripes came from; the vertical
    resampler needs it to restore the aspect ratio.
    """

    values: np.ndarray
    channel_order: tuple[int, int, int] = (0, 1, 2)
    source_width: int | None = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[1] % 3:
            raise DimensionMismatch(f"stripe values must be H x 3(M-1), got {v.shape}")
        order = tuple(int(c) for c in self.channel_order)
        if sorted(order) != [0, 1, 2]:
            raise ValueError(f"channel_order must be a permutation of (0, 1, 2), got {order}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteValue("stripe contains non-finite values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "channel_order", order)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def column_channels(self) -> np.ndarray:
        """Channel index carried by every column."""
        return np.asarray(self.channel_order)[np.arange(self.width) % 3]

    def channel_columns(self, ch: int) -> np.ndarray:
        return np.flatnonzero(self.column_channels() == ch)

    def to_rgb(self, fill=np.nan) -> np.ndarray:
        """Dense (H, C, 3) view with ``fill`` in the invalid channels."""
        out = np.full(self.values.shape + (3,), fill, dtype=np.float64)
        cols = np.arange(self.width)
        out[:, cols, self.column_channels()] = self.values
        return out

    def replace(self, values) -> "StripeImage":
        return StripeImage(values, self.channel_order, self.source_width)


def write_raster(path, raster, kind: str = "likelihood") -> None:
    """Write a gray raster, likelihood map or (H, W, 3, 6) coefficient tensor as LFR."""
    if kind not in KIND_CODES:
        raise ValueError(f"unknown raster kind {kind!r}")
    a = np.asarray(raster)
    if kind == "coeff":
        if a.ndim != 4 or a.shape[2:] != (3, 6):
            raise DimensionMismatch(f"coefficient tensor must be (H, W, 3, 6), got {a.shape}")
    elif a.ndim != 2:
        raise DimensionMismatch(f"{kind} raster must be 2-D, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue(f"refusing to write non-finite values to {path}")
    h, w = a.shape[:2]
    head = HEADER.pack(MAGIC, DTYPE_FLOAT32, KIND_CODES[kind], h, w)
    if kind == "coeff":
        head += INNER.pack(COEFF_INNER)
    payload = np.ascontiguousarray(a, dtype="<f4").tobytes()
    with open(os.fspath(path), "wb") as f:
        f.write(head)
        f.write(payload)


def read_raster(path, expected_kind: str | None = None, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Read an LFR file and validate it for its kind.

    Gray and likelihood rasters must lie in [0, 1]; coefficient tensors must be
    per-pixel simplices (within 1e-3) and are returned renormalized.
    """
    with open(os.fspath(path), "rb") as f:
        data = f.read()
    if len(data) < HEADER.size or data[:4] != MAGIC:
        raise BadMagic(f"{path}: not an LFR1 file")
    magic, dtype, kind_code, h, w = HEADER.unpack_from(data)
    if dtype != DTYPE_FLOAT32:
        raise BadMagic(f"{path}: unsupported dtype code {dtype:#04x}")
    if kind_code not in KIND_NAMES:
        raise BadMagic(f"{path}: unknown kind code {kind_code:#04x}")
    kind = KIND_NAMES[kind_code]
    if expected_kind is not None and kind != expected_kind:
        raise DimensionMismatch(f"{path}: holds a {kind} raster, expected {expected_kind}")
    offset = HEADER.size
    inner = 1
    if kind == "coeff":
        (inner,) = INNER.unpack_from(data, offset)
        offset += INNER.size
        if inner != COEFF_INNER:
            raise DimensionMismatch(f"{path}: coefficient inner size {inner}, expected {COEFF_INNER}")
    n = h * w * inner
    if len(data) - offset != 4 * n:
        raise DimensionMismatch(f"{path}: payload has {len(data) - offset} bytes, expected {4 * n}")
    a = np.frombuffer(data, dtype="<f4", count=n, offset=offset).astype(np.float64)
    if shape is not None and (h, w) != tuple(shape):
        raise DimensionMismatch(f"{path}: raster is {h}x{w}, expected {shape[0]}x{shape[1]}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue(f"{path}: non-finite values in payload")
    if kind == "coeff":
        return validate_coeffs(a.reshape(h, w, 3, 6))
    a = a.reshape(h, w)
    _check_unit_range(a, f"{path}")
    return a


def write_grid(path, grid: LenticuleGrid) -> None:
    """Plain-text grid: ``LGRID M H W`` then one ``t b`` line per boundary."""
    lines = [f"LGRID {grid.M} {grid.height} {grid.width}"]
    lines += [f"{t:.6f} {b:.6f}" for t, b in zip(grid.t, grid.b)]
    with open(os.fspath(path), "w") as f:
        f.write("\n".join(lines) + "\n")


def read_grid(path) -> LenticuleGrid:
    with open(os.fspath(path)) as f:
        rows = [ln.split() for ln in f if ln.strip()]
    if not rows or rows[0][0] != "LGRID" or len(rows[0]) != 4:
        raise BadMagic(f"{path}: missing 'LGRID M H W' header")
    m, h, w = (int(v) for v in rows[0][1:])
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, 2)
    if body.shape[0] != m:
        raise DimensionMismatch(f"{path}: header announces {m} boundaries, found {body.shape[0]}")
    return LenticuleGrid(body[:, 0], body[:, 1], h, w)
