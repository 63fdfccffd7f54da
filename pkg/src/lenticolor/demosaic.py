"""Fill the two missing channels of every stripe column.

Stripe column c carries channel ``channel_order[c % 3]``; the same channel
recurs every third column.  Every missing value is a weighted sum of up to six
same-channel columns nearby (the :class:`NeighborIndex`).  Analytic kernels and
externally predicted coefficient tensors both plug in as weights over those six
slots.  A column that carries a channel always returns its own value for it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TensorDimMismatch
from .raster import StripeImage, validate_coeffs

K = 6
MIN_WIDTH = 9
BASELINE_KINDS = ("nearest", "linear", "cubic")
ANALYTIC_KINDS = ("nearest", "linear", "convex-cubic")


@dataclass(frozen=True)
class NeighborIndex:
    """``cols[c, ch, k]``: k-th nearest column carrying channel ch, seen from column c.

    Neighbours are sorted by distance with ties going to the left column.
    ``count[c, ch]`` says how many slots are real; the rest repeat slot 0.
    Where column c carries ch itself, the set is just ``{c}``.
    """

    cols: np.ndarray
    count: np.ndarray
    channel_order: tuple[int, int, int]

    @property
    def width(self) -> int:
        return self.cols.shape[0]

    def valid(self) -> np.ndarray:
        """(C, 3) mask of the (column, channel) pairs observed directly."""
        slot = np.asarray([self.channel_order.index(ch) for ch in range(3)])
        return (np.arange(self.width)[:, None] % 3) == slot[None, :]


def build_neighbor_index(width: int, channel_order=(0, 1, 2)) -> NeighborIndex:
    if width < MIN_WIDTH:
        raise ValueError(f"stripe width must be at least {MIN_WIDTH}, got {width}")
    order = tuple(int(c) for c in channel_order)
    c = np.arange(width)
    cols = np.empty((width, 3, K), dtype=np.intp)
    count = np.empty((width, 3), dtype=np.intp)
    for ch in range(3):
        src = np.flatnonzero(c % 3 == order.index(ch))
        d = np.abs(src[None, :] - c[:, None])
        # sort by distance, then by column so the left one wins a tie
        rank = np.lexsort((np.broadcast_to(src, d.shape), d), axis=1)[:, :K]
        n = min(K, src.size)
        near = src[rank[:, :n]]
        cols[:, ch, :n] = near
        cols[:, ch, n:] = near[:, :1]
        count[:, ch] = n
    idx = NeighborIndex(cols, count, order)
    v = idx.valid()
    cols[v] = c[np.nonzero(v)[0]][:, None]
    count[v] = 1
    return idx


def _flanks(idx: NeighborIndex):
    # nearest same-channel column on each side (-1 where none) and the
    # slot each occupies in the neighbour list
    C = idx.width
    c = np.arange(C)[:, None, None]
    real = np.arange(K)[None, None, :] < idx.count[..., None]
    left = real & (idx.cols < c)
    right = real & (idx.cols > c)
    kl = np.where(left.any(-1), left.argmax(-1), -1)
    kr = np.where(right.any(-1), right.argmax(-1), -1)
    return kl, kr


def analytic_weights(idx: NeighborIndex, kind: str = "convex-cubic") -> np.ndarray:
    """(C, 3, 6) convex weights over the neighbour slots for an analytic kernel."""
    if kind not in ANALYTIC_KINDS:
        raise ValueError(f"unknown kernel {kind!r}; expected one of {ANALYTIC_KINDS}")
    C = idx.width
    w = np.zeros((C, 3, K))
    w[..., 0] = 1.0  # nearest, also the fallback beyond the outermost sample
    if kind == "nearest":
        return w
    kl, kr = _flanks(idx)
    inner = (kl >= 0) & (kr >= 0) & ~idx.valid()
    ci, chi = np.nonzero(inner)
    L = idx.cols[ci, chi, kl[inner]]
    R = idx.cols[ci, chi, kr[inner]]
    t = (ci - L) / (R - L)
    w[inner] = 0.0
    if kind == "linear":
        w[ci, chi, kl[inner]] = 1.0 - t
        w[ci, chi, kr[inner]] = t
        return w
    taps = _catmull_rom(t)  # for L-3, L, R, R+3 in column units of 3
    taps = np.maximum(taps, 0.0)
    taps /= taps.sum(axis=1, keepdims=True)
    for j, col in enumerate((L - 3, L, R, R + 3)):
        k = _slot_of(idx, ci, chi, col, L, R)
        np.add.at(w, (ci, chi, k), taps[:, j])
    return w


def _slot_of(idx, ci, chi, col, L, R):
    cand = idx.cols[ci, chi, :]  # (n, K)
    hit = cand == col[:, None]
    has = hit.any(axis=1)
    # missing outer taps fold onto the flank on their side
    fallback = np.where(col < L, L, np.where(col > R, R, col))
    hit_fb = cand == fallback[:, None]
    return np.where(has, hit.argmax(axis=1), hit_fb.argmax(axis=1))


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    t2, t3 = t * t, t * t * t
    return np.stack([
        0.5 * (-t3 + 2 * t2 - t),
        0.5 * (3 * t3 - 5 * t2 + 2),
        0.5 * (-3 * t3 + 4 * t2 + t),
        0.5 * (t3 - t2),
    ], axis=1)


@dataclass(frozen=True)
class WeightSource:
    """Where fill_convex gets its weights: an analytic kernel or an external tensor."""

    kind: str = "convex-cubic"
    tensor: np.ndarray | None = None

    @classmethod
    def analytic(cls, kind: str = "convex-cubic") -> "WeightSource":
        if kind not in ANALYTIC_KINDS:
            raise ValueError(f"unknown kernel {kind!r}; expected one of {ANALYTIC_KINDS}")
        return cls(kind)

    @classmethod
    def external(cls, tensor) -> "WeightSource":
        return cls("external", validate_coeffs(tensor))


def _combine(values: np.ndarray, idx: NeighborIndex, w: np.ndarray) -> np.ndarray:
    H, C = values.shape
    out = np.empty((H, C, 3))
    for ch in range(3):
        g = values[:, idx.cols[:, ch, :]]  # (H, C, K)
        if w.ndim == 3:
            out[..., ch] = np.einsum("hck,ck->hc", g, w[:, ch, :])
        else:
            out[..., ch] = np.einsum("hck,hck->hc", g, w[:, :, ch, :])
    return out


def _passthrough(out: np.ndarray, stripe: StripeImage) -> np.ndarray:
    c = np.arange(stripe.width)
    out[:, c, stripe.column_channels()] = stripe.values
    return out


def fill_convex(stripe: StripeImage, src: WeightSource | str | np.ndarray = "convex-cubic") -> np.ndarray:
    """Convex combination of the six nearest same-channel samples, (H, C, 3)."""
    if isinstance(src, str):
        src = WeightSource.analytic(src)
    elif not isinstance(src, WeightSource):
        src = WeightSource.external(src)
    idx = build_neighbor_index(stripe.width, stripe.channel_order)
    if src.tensor is not None:
        w = src.tensor
        if w.shape[:2] != stripe.values.shape:
            raise TensorDimMismatch(f"coefficient tensor is {w.shape[0]}x{w.shape[1]}, stripe is "
                                    f"{stripe.height}x{stripe.width}")
    else:
        w = analytic_weights(idx, src.kind)
    return _passthrough(_combine(stripe.values, idx, w), stripe)


def fill_baseline(stripe: StripeImage, kind: str = "linear") -> np.ndarray:
    """Row-wise 1-D interpolation across each channel's columns, clamped to [0, 1].

    Beyond the outermost sample of a channel the nearest sample is repeated.
    ``cubic`` is Catmull-Rom with end samples repeated; it can overshoot.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINE_KINDS}")
    v = stripe.values
    H, C = v.shape
    x = np.arange(C, dtype=np.float64)
    out = np.empty((H, C, 3))
    for ch in range(3):
        src = stripe.channel_columns(ch)
        s = v[:, src]
        if kind == "nearest":
            idx = build_neighbor_index(C, stripe.channel_order)
            out[..., ch] = v[:, idx.cols[:, ch, 0]]
        elif kind == "linear":
            for h in range(H):
                out[h, :, ch] = np.interp(x, src, s[h])
        else:
            out[..., ch] = _cubic_rows(x, src, s)
    return np.clip(_passthrough(out, stripe), 0.0, 1.0)


def _cubic_rows(x, src, s):
    n = src.size
    j = np.clip(np.searchsorted(src, x, side="right") - 1, 0, n - 2)
    t = np.clip((x - src[j]) / (src[j + 1] - src[j]), 0.0, 1.0)
    taps = _catmull_rom(t)  # (C, 4)
    pick = np.clip(j[:, None] + np.arange(-1, 3)[None, :], 0, n - 1)
    return np.einsum("hck,ck->hc", s[:, pick], taps)
