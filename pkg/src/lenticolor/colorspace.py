"""Linear conversion from the lenticular RGB space to a standard RGB space.

The conversion is a von Kries adaptation done in CAT02 cone space:
RGB -> XYZ (step A), XYZ -> LMS, per-cone whitepoint scaling, LMS -> XYZ and
XYZ -> destination RGB.  The composite matrix for Adobe RGB (1998) is stored
as published to three decimals; the factors are kept to recompose and check it.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import NonFiniteValue, SingularMatrix

LENTICULAR_TO_ADOBE = np.array([
    [0.789, 0.154, 0.057],
    [-0.286, 1.195, 0.06],
    [-0.049, 0.035, 1.035],
])
LENTICULAR_TO_ADOBE.flags.writeable = False

LENTICULAR_WHITE = np.array([0.991, 1.0, 1.315])
D65_WHITE = np.array([0.95047, 1.0, 1.08883])

# CIECAM02 chromatic adaptation (XYZ -> sharpened LMS)
CAT02 = np.array([
    [0.7328, 0.4296, -0.1624],
    [-0.7036, 1.6975, 0.0061],
    [0.0030, 0.0136, 0.9834],
])
CAT02_INV = np.linalg.inv(CAT02)

# Adobe RGB (1998), D65, XYZ -> linear RGB
XYZ_TO_ADOBE = np.array([
    [2.0413690, -0.5649464, -0.3446944],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0134474, -0.1183897, 1.0154096],
])
ADOBE_GAMMA = 563.0 / 256.0

for _m in (LENTICULAR_WHITE, D65_WHITE, CAT02, CAT02_INV, XYZ_TO_ADOBE):
    _m.flags.writeable = False


def as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"color matrix must be 3x3, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteValue("color matrix contains non-finite entries")
    return m


def _invertible(m, what: str) -> np.ndarray:
    m = as_matrix(m)
    if abs(np.linalg.det(m)) < 1e-12:
        raise SingularMatrix(f"{what} is singular")
    return m


def normalize_whitepoint(xyz) -> np.ndarray:
    w = np.asarray(xyz, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("whitepoint components must be finite and positive")
    return w / w[1]


def apply_matrix(img, m, clamp: bool = True) -> np.ndarray:
    """Per-pixel ``m @ rgb`` on an (..., 3) array, optionally clipped to [0, 1]."""
    m = as_matrix(m)
    out = np.asarray(img, dtype=np.float64) @ m.T
    return np.clip(out, 0.0, 1.0) if clamp else out


def out_of_gamut(img) -> int:
    """Number of pixels with at least one channel outside [0, 1]."""
    a = np.asarray(img)
    return int(np.count_nonzero(np.any((a < 0) | (a > 1), axis=-1)))


def cat_scale(src_white, dst_white, lms=CAT02) -> np.ndarray:
    """Per-cone gains taking the source whitepoint's response to the destination's."""
    s = as_matrix(lms) @ normalize_whitepoint(src_white)
    d = as_matrix(lms) @ normalize_whitepoint(dst_white)
    if np.any(np.abs(s) < 1e-12):
        raise SingularMatrix("source whitepoint has a zero cone response")
    return d / s


def compose_cat(step_a, lms_fwd, scale, lms_inv, step_e) -> np.ndarray:
    """``step_e @ lms_inv @ diag(scale) @ lms_fwd @ step_a``."""
    scale = np.asarray(scale, dtype=np.float64).reshape(3)
    if np.any(np.abs(scale) < 1e-12) or not np.all(np.isfinite(scale)):
        raise SingularMatrix("adaptation scale must be finite and non-zero")
    a = _invertible(step_a, "step A matrix")
    f = _invertible(lms_fwd, "cone matrix")
    i = _invertible(lms_inv, "inverse cone matrix")
    e = _invertible(step_e, "destination matrix")
    return e @ i @ np.diag(scale) @ f @ a


def adaptation_to_adobe(src_white=LENTICULAR_WHITE) -> np.ndarray:
    """Steps B to E: XYZ under ``src_white`` to linear Adobe RGB (D65)."""
    return compose_cat(np.eye(3), CAT02, cat_scale(src_white, D65_WHITE), CAT02_INV, XYZ_TO_ADOBE)


def recover_step_a(composite=LENTICULAR_TO_ADOBE, src_white=LENTICULAR_WHITE) -> np.ndarray:
    """RGB -> XYZ matrix implied by a composite and the adaptation steps."""
    return np.linalg.solve(adaptation_to_adobe(src_white), as_matrix(composite))


def adobe_encode(rgb) -> np.ndarray:
    """Adobe RGB (1998) transfer function on linear values in [0, 1]."""
    return np.power(np.clip(rgb, 0.0, 1.0), 1.0 / ADOBE_GAMMA)


def adobe_decode(rgb) -> np.ndarray:
    return np.power(np.clip(rgb, 0.0, 1.0), ADOBE_GAMMA)


def read_matrix(path) -> np.ndarray:
    """Three lines of three numbers; ``#`` starts a comment."""
    rows = []
    with open(os.fspath(path)) as f:
        for ln in f:
            ln = ln.split("#", 1)[0].strip()
            if ln:
                rows.append([float(v) for v in ln.replace(",", " ").split()])
    if len(rows) != 3 or any(len(r) != 3 for r in rows):
        raise ValueError(f"{path}: expected 3 lines of 3 numbers")
    return as_matrix(rows)


def write_matrix(path, m) -> None:
    m = as_matrix(m)
    with open(os.fspath(path), "w") as f:
        for r in m:
            f.write(" ".join(f"{v:.9g}" for v in r) + "\n")
