"""Standard image I/O: 8/16-bit PNG and TIFF in, 16-bit PNG out."""
from __future__ import annotations

import os

import cv2
import numpy as np

from .errors import LenticularError
from .raster import as_gray, normalize_intensity, read_raster

READABLE = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp", ".lfr")
PNG_COMPRESSION = 3


class ImageReadError(LenticularError, IOError):
    pass


def _imread(path) -> np.ndarray:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ImageReadError(f"{path}: no such file")
    img = cv2.imread(path, cv2.IMREAD_UNCHANGED | cv2.IMREAD_ANYDEPTH)
    if img is None:
        raise ImageReadError(f"{path}: could not decode image")
    return img


def read_gray(path) -> np.ndarray:
    """Grayscale scan as float64 in [0, 1]; color files are converted to luma."""
    if os.fspath(path).lower().endswith(".lfr"):
        return read_raster(path, "gray")
    img = _imread(path)
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[..., :3]
        img = cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)
    return as_gray(normalize_intensity(img))


def read_rgb(path) -> np.ndarray:
    """RGB image as float64 (H, W, 3) in [0, 1]."""
    img = _imread(path)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    img = img[..., :3][..., ::-1]  # BGR -> RGB
    return np.ascontiguousarray(normalize_intensity(img))


def _to_u16(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("refusing to encode non-finite pixels")
    return np.floor(np.clip(a, 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)


def write_gray16(path, img) -> None:
    _imwrite(path, _to_u16(img))


def write_rgb16(path, rgb) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {rgb.shape}")
    _imwrite(path, np.ascontiguousarray(_to_u16(rgb)[..., ::-1]))


def _imwrite(path, img) -> None:
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower() or ".png"
    params = [cv2.IMWRITE_PNG_COMPRESSION, PNG_COMPRESSION] if ext == ".png" else []
    ok, buf = cv2.imencode(ext, img, params)
    if not ok:
        raise OSError(f"{path}: encoding failed")
    with open(path, "wb") as f:
        f.write(buf.tobytes())
