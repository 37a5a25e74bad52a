"""Sliding-window background estimation.

Each background is the per-pixel geometric median, in RGB, of a contiguous
window of frames around the target frame.  Frames are consumed from any
iterable and held in a ring buffer no larger than the window, so each input
is decoded exactly once however wide the window is.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np
from numba import njit, prange
from sklearn.base import BaseEstimator, TransformerMixin

from ._parallel import worker_threads
from ._validation import check_frames
from .imaging import DEFAULT_MAX_ITER, DEFAULT_TOL, check_raster, to_uint8

logger = logging.getLogger(__name__)

ALIGNMENTS = ("centered", "trailing")


@dataclass(frozen=True)
class WindowSpec:
    width: int = 51
    alignment: str = "centered"

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("window width must be >= 1")
        if self.alignment not in ALIGNMENTS:
            raise ValueError(f"alignment must be one of {ALIGNMENTS}")

    @property
    def reach(self) -> tuple[int, int]:
        """Frames used (before, after) the target frame."""
        if self.alignment == "trailing":
            return self.width - 1, 0
        # even widths get the extra neighbor after the target
        before = (self.width - 1) // 2
        return before, self.width - 1 - before

    def span(self, n: int, count: int) -> tuple[int, int]:
        """Inclusive frame range for target ``n``, truncated at the sequence ends."""
        before, after = self.reach
        return max(0, n - before), min(count - 1, n + after)


_FAST = {"reassoc", "nsz", "arcp", "contract", "afn"}


@njit(fastmath=_FAST, error_model="numpy", cache=True, inline="always")
def _step_seg(r, lo, hi, x0, x1, x2, tol2):
    # One fused pass: anchor test plus inverse-distance weighted sums, in
    # float32 for SIMD width.  When an anchor is hit the sums may be
    # non-finite; the caller discards them.
    c0 = np.float32(x0)
    c1 = np.float32(x1)
    c2 = np.float32(x2)
    t2 = np.float32(tol2)
    one = np.float32(1.0)
    close = 0
    den = np.float32(0.0)
    n0 = np.float32(0.0)
    n1 = np.float32(0.0)
    n2 = np.float32(0.0)
    for i in range(lo, hi):
        v0 = np.float32(r[0, i])
        v1 = np.float32(r[1, i])
        v2 = np.float32(r[2, i])
        d0 = v0 - c0
        d1 = v1 - c1
        d2 = v2 - c2
        sq = d0 * d0 + d1 * d1 + d2 * d2
        close += sq < t2
        w = one / np.sqrt(sq)
        den += w
        n0 += w * v0
        n1 += w * v1
        n2 += w * v2
    return close, np.float64(den), np.float64(n0), np.float64(n1), np.float64(n2)


@njit(cache=True)
def _nearest(r, a0, a1, b0, b1, x0, x1, x2):
    best = -1
    best_sq = np.inf
    for lo, hi in ((a0, a1), (b0, b1)):
        for i in range(lo, hi):
            d0 = r[0, i] - x0
            d1 = r[1, i] - x1
            d2 = r[2, i] - x2
            sq = d0 * d0 + d1 * d1 + d2 * d2
            if sq < best_sq:
                best = i
                best_sq = sq
    return best


@njit(fastmath=_FAST, error_model="numpy", cache=True)
def _median_px(r, a0, a1, b0, b1, x0, x1, x2, tol, max_iter, out):
    """Weiszfeld for one pixel whose samples are ``r[:, a0:a1]`` then ``r[:, b0:b1]``.

    ``r`` is a (3, slots) uint8 view of the ring buffer and (x0, x1, x2) the
    exact mean of those samples, the starting iterate.  A constant pixel hits
    the anchor rule on the first pass and comes back exact.
    """
    tol2 = tol * tol
    for _ in range(max_iter):
        close, den, n0, n1, n2 = _step_seg(r, a0, a1, x0, x1, x2, tol2)
        close_b, eb, m0, m1, m2 = _step_seg(r, b0, b1, x0, x1, x2, tol2)
        if close + close_b:
            # an iterate on top of a sample: return that sample exactly
            best = _nearest(r, a0, a1, b0, b1, x0, x1, x2)
            x0 = r[0, best]
            x1 = r[1, best]
            x2 = r[2, best]
            break
        den += eb
        y0 = (n0 + m0) / den
        y1 = (n1 + m1) / den
        y2 = (n2 + m2) / den
        e0 = y0 - x0
        e1 = y1 - x1
        e2 = y2 - x2
        x0 = y0
        x1 = y1
        x2 = y2
        if e0 * e0 + e1 * e1 + e2 * e2 < tol2:
            break
    out[0] = x0
    out[1] = x1
    out[2] = x2


@njit(cache=True)
def _clamp_round(v):
    r = np.floor(v + 0.5)
    if r < 0.0:
        return 0
    if r > 255.0:
        return 255
    return int(r)


@njit(cache=True)
def _pixel_median(r, tol, max_iter):
    n = r.shape[1]
    sums = np.zeros(3, dtype=np.int64)
    for i in range(n):
        for c in range(3):
            sums[c] += r[c, i]
    res = np.empty(3)
    _median_px(r, 0, n, 0, 0, sums[0] / n, sums[1] / n, sums[2] / n, tol, max_iter, res)
    return res


def pixel_background(samples, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Robust color of one pixel position over time, as an 8-bit RGB triple."""
    samples = np.asarray(samples).reshape(-1, 3)
    if samples.shape[0] == 0:
        raise ValueError("no points")
    if samples.min() < 0 or samples.max() > 255:
        raise ValueError("samples must be 8-bit RGB")
    r = np.ascontiguousarray(samples.T.astype(np.uint8))
    return to_uint8(_pixel_median(r, float(tol), int(max_iter)))


@njit(parallel=True, cache=True)
def _window_median(ring, sums, a0, a1, b0, b1, tol, max_iter, out):
    n = (a1 - a0) + (b1 - b0)
    h = ring.shape[0]
    w = ring.shape[1]
    for y in prange(h):
        res = np.empty(3)
        for x in range(w):
            m = sums[y, x]
            _median_px(ring[y, x], a0, a1, b0, b1, m[0] / n, m[1] / n, m[2] / n, tol, max_iter, res)
            out[y, x, 0] = _clamp_round(res[0])
            out[y, x, 1] = _clamp_round(res[1])
            out[y, x, 2] = _clamp_round(res[2])


@njit(parallel=True, cache=True)
def _accumulate(ring, sums, slot, sign):
    h = ring.shape[0]
    w = ring.shape[1]
    for y in prange(h):
        for x in range(w):
            for c in range(3):
                sums[y, x, c] += sign * np.int32(ring[y, x, c, slot])


def _segments(lo: int, hi: int, slots: int) -> tuple[int, int, int, int]:
    # frames lo..hi (inclusive) as at most two slot ranges, in temporal order
    a0 = lo % slots
    length = hi - lo + 1
    if a0 + length <= slots:
        return a0, a0 + length, 0, 0
    return a0, slots, 0, a0 + length - slots


def window_median(stack, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, n_jobs=None) -> np.ndarray:
    """Per-pixel geometric median of a ``(n, H, W, 3)`` uint8 stack."""
    stack = np.asarray(stack, dtype=np.uint8)
    ring = np.ascontiguousarray(np.moveaxis(stack, 0, -1))
    sums = stack.sum(axis=0, dtype=np.int32)
    out = np.empty(stack.shape[1:], dtype=np.uint8)
    with worker_threads(n_jobs):
        _window_median(ring, sums, 0, stack.shape[0], 0, 0, float(tol), int(max_iter), out)
    return out


def sliding_background(
    frames: Iterable,
    spec: WindowSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    n_jobs=None,
) -> Iterator[np.ndarray]:
    """Yield one background per input frame, in order.

    ``frames`` may be any iterable, including a lazy decoder; it is consumed
    exactly once and at most ``spec.width`` decoded frames are held at a time,
    in a pixel-major ring buffer.  Window means are kept as running integer
    sums so each output starts its iteration without an extra pass.
    """
    _, after = spec.reach
    slots = spec.width
    it = iter(frames)
    ring = sums = shape = None
    seen = 0
    exhausted = False
    lo_in, hi_in = 0, -1  # frames currently folded into sums
    n = 0
    while True:
        while not exhausted and seen <= n + after:
            try:
                frame = check_raster(next(it), f"frame {seen}")
            except StopIteration:
                exhausted = True
                break
            if ring is None:
                shape = frame.shape
                ring = np.empty(shape + (slots,), dtype=np.uint8)
                sums = np.zeros(shape, dtype=np.int32)
            elif frame.shape != shape:
                raise ValueError(f"frame {seen} has shape {frame.shape}, expected {shape}")
            evicted = seen - slots
            if lo_in <= evicted <= hi_in:
                with worker_threads(n_jobs):
                    _accumulate(ring, sums, evicted % slots, -1)
                lo_in = evicted + 1
            ring[..., seen % slots] = frame
            seen += 1
        if n >= seen:
            if seen == 0:
                raise ValueError("empty frame sequence")
            return
        lo, hi = spec.span(n, seen)
        if hi_in < lo_in or lo > hi_in:
            lo_in, hi_in = lo, lo - 1
            sums[...] = 0
        out = np.empty(shape, dtype=np.uint8)
        with worker_threads(n_jobs):
            for k in range(lo_in, lo):
                _accumulate(ring, sums, k % slots, -1)
            for k in range(hi_in + 1, hi + 1):
                _accumulate(ring, sums, k % slots, 1)
            _window_median(ring, sums, *_segments(lo, hi, slots), float(tol), int(max_iter), out)
        lo_in, hi_in = lo, hi
        yield out
        n += 1


class BackgroundEstimator(TransformerMixin, BaseEstimator):
    """Sliding geometric-median background, as a transformer.

    Parameters
    ----------
    width : int
        Window length in frames, typically 10 to 200.
    alignment : {"centered", "trailing"}
        Where the window sits relative to its target frame.
    tol, max_iter :
        Weiszfeld stopping rule, in 8-bit channel units.
    n_jobs : int or None
        Worker threads for the per-pixel kernel.
    """

    def __init__(self, width=51, alignment="centered", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, n_jobs=None):
        self.width = width
        self.alignment = alignment
        self.tol = tol
        self.max_iter = max_iter
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        WindowSpec(self.width, self.alignment)
        if hasattr(X, "shape"):
            self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def transform(self, X):
        X = check_frames(X)
        return np.stack(list(self.iter_transform(X)))

    def iter_transform(self, X) -> Iterator[np.ndarray]:
        """Stream backgrounds from a lazy frame source without materializing it."""
        spec = WindowSpec(self.width, self.alignment)
        return sliding_background(X, spec, self.tol, self.max_iter, self.n_jobs)
