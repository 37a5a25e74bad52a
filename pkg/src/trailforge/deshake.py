"""Camera-shake removal by blockwise translation search.

Offsets are measured between consecutive frames on a grid of square blocks,
low-contrast blocks are dropped, and the surviving block offsets are fused
with a geometric median so that moving objects do not drag the estimate.
Summed offsets give each frame's displacement, and one common crop restores a
shared field of view.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._parallel import worker_threads
from ._validation import check_frames
from .exceptions import DeshakeError
from .imaging import Offset2D, Rect, geometric_median, to_grayscale, translate_crop

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeshakeConfig:
    max_offset: int = 8
    block_size: int = 32
    contrast_threshold: float = 4.0
    subregion: Rect | None = None

    def problems(self) -> list[str]:
        out = []
        if self.max_offset < 1:
            out.append("deshake.max_offset must be >= 1")
        if self.block_size < 3 * self.max_offset:
            out.append(
                f"deshake.block_size ({self.block_size}) must be at least 3x max_offset "
                f"({self.max_offset}): blocks need to be a few times larger than the largest offset"
            )
        if self.contrast_threshold < 0:
            out.append("deshake.contrast_threshold must be >= 0")
        return out

    def check(self) -> "DeshakeConfig":
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))
        return self


@dataclass(frozen=True)
class BlockMeasurement:
    block: Rect
    offset: Offset2D
    rms: float
    contrast: float
    accepted: bool


@dataclass
class OffsetTrace:
    """Cumulative per-frame offsets; ``offsets[0]`` is always (0, 0)."""

    offsets: list[Offset2D] = field(default_factory=lambda: [Offset2D(0, 0)])

    def __len__(self):
        return len(self.offsets)

    def __getitem__(self, i):
        return self.offsets[i]

    def __iter__(self):
        return iter(self.offsets)

    def steps(self) -> list[Offset2D]:
        return [b - a for a, b in zip(self.offsets, self.offsets[1:])]

    def to_tsv(self) -> str:
        lines = ["frame\tdx\tdy\tcum_dx\tcum_dy"]
        prev = Offset2D(0, 0)
        for i, cum in enumerate(self.offsets):
            step = cum - prev
            lines.append(f"{i}\t{step.dx}\t{step.dy}\t{cum.dx}\t{cum.dy}")
            prev = cum
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "OffsetTrace":
        rows = [line.split("\t") for line in text.strip().splitlines()[1:]]
        return cls([Offset2D(int(r[3]), int(r[4])) for r in rows])


def candidate_offsets(max_offset: int) -> np.ndarray:
    """All offsets within ``max_offset``, in tie-break order.

    Earlier entries win ties: smallest |dx|+|dy|, then smallest dy, then dx.
    """
    r = range(-max_offset, max_offset + 1)
    cands = sorted(((dx, dy) for dy in r for dx in r), key=lambda o: (abs(o[0]) + abs(o[1]), o[1], o[0]))
    return np.array(cands, dtype=np.int64)


def block_contrast(gray: np.ndarray, block: Rect) -> float:
    """Luma standard deviation inside ``block``."""
    return float(np.std(gray[block.slices]))


@njit(cache=True)
def _search_one(ref, tgt, x0, y0, bw, bh, cands):
    best = np.inf
    best_k = 0
    for k in range(cands.shape[0]):
        dx = cands[k, 0]
        dy = cands[k, 1]
        ssd = 0.0
        for y in range(y0, y0 + bh):
            for x in range(x0, x0 + bw):
                d = ref[y, x] - tgt[y + dy, x + dx]
                ssd += d * d
            if ssd >= best:
                break
        if ssd < best:
            best = ssd
            best_k = k
    return best_k, best


@njit(parallel=True, cache=True)
def _search_blocks(ref, tgt, origins, size, cands, out_k, out_ssd):
    for b in prange(origins.shape[0]):
        k, ssd = _search_one(ref, tgt, origins[b, 0], origins[b, 1], size, size, cands)
        out_k[b] = k
        out_ssd[b] = ssd


def _check_searchable(shape, block: Rect, max_offset: int):
    h, w = shape
    if (
        block.x0 < max_offset
        or block.y0 < max_offset
        or block.x1 + max_offset > w
        or block.y1 + max_offset > h
    ):
        raise DeshakeError("block not searchable")


def best_block_offset(ref: np.ndarray, tgt: np.ndarray, block: Rect, max_offset: int) -> tuple[Offset2D, float]:
    """Exhaustive integer search for where ``block`` of ``ref`` reappears in ``tgt``.

    Returns the offset (dx, dy) minimizing the RMS difference between
    ``ref[block]`` and ``tgt[block + (dx, dy)]``, and that RMS.
    """
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    tgt = np.ascontiguousarray(tgt, dtype=np.float64)
    _check_searchable(ref.shape, block, max_offset)
    cands = candidate_offsets(max_offset)
    k, ssd = _search_one(ref, tgt, block.x0, block.y0, block.width, block.height, cands)
    return Offset2D(int(cands[k, 0]), int(cands[k, 1])), math.sqrt(ssd / block.area)


def tile_blocks(shape, cfg: DeshakeConfig) -> list[Rect]:
    """Square blocks covering the analysis region, kept clear of the search margin.

    Tiling starts at the region's searchable corner; partial blocks at the
    far edges are dropped.
    """
    h, w = shape
    m = cfg.max_offset
    region = cfg.subregion or Rect.full(w, h)
    x_lo, y_lo = max(region.x0, m), max(region.y0, m)
    x_hi, y_hi = min(region.x1, w - m), min(region.y1, h - m)
    s = cfg.block_size
    return [
        Rect(x, y, s, s)
        for y in range(y_lo, y_hi - s + 1, s)
        for x in range(x_lo, x_hi - s + 1, s)
    ]


def measure_blocks(ref: np.ndarray, tgt: np.ndarray, cfg: DeshakeConfig, n_jobs=None) -> list[BlockMeasurement]:
    """Best offset, RMS and contrast for every block; gray inputs."""
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    tgt = np.ascontiguousarray(tgt, dtype=np.float64)
    if ref.shape != tgt.shape:
        raise ValueError(f"frame shapes differ: {ref.shape} vs {tgt.shape}")
    blocks = tile_blocks(ref.shape, cfg)
    contrast = [block_contrast(ref, b) for b in blocks]
    live = [i for i, c in enumerate(contrast) if c >= cfg.contrast_threshold]
    cands = candidate_offsets(cfg.max_offset)
    origins = np.array([[blocks[i].x0, blocks[i].y0] for i in live], dtype=np.int64).reshape(-1, 2)
    ks = np.zeros(len(live), dtype=np.int64)
    ssds = np.zeros(len(live))
    if live:
        with worker_threads(n_jobs):
            _search_blocks(ref, tgt, origins, cfg.block_size, cands, ks, ssds)
    found = {i: (k, s) for i, k, s in zip(live, ks, ssds)}
    out = []
    area = cfg.block_size**2
    for i, block in enumerate(blocks):
        if i in found:
            k, ssd = found[i]
            out.append(
                BlockMeasurement(block, Offset2D(int(cands[k, 0]), int(cands[k, 1])), math.sqrt(ssd / area), contrast[i], True)
            )
        else:
            # low contrast: not searched, nothing trustworthy to report
            out.append(BlockMeasurement(block, Offset2D(), 0.0, contrast[i], False))
    return out


def _round_half_away(v: float) -> int:
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def frame_offset(ref: np.ndarray, tgt: np.ndarray, cfg: DeshakeConfig, n_jobs=None) -> Offset2D:
    """Robust translation of ``tgt`` relative to ``ref`` (both gray).

    If ``tgt`` is ``ref`` with its content moved by (dx, dy), returns (dx, dy).
    """
    blocks = measure_blocks(ref, tgt, cfg, n_jobs)
    pts = [(m.offset.dx, m.offset.dy) for m in blocks if m.accepted]
    if not pts:
        raise DeshakeError("no usable blocks")
    med = geometric_median(np.array(pts, dtype=np.float64))
    return Offset2D(_round_half_away(med[0]), _round_half_away(med[1]))


def accumulate(steps) -> OffsetTrace:
    offsets = [Offset2D(0, 0)]
    for s in steps:
        offsets.append(offsets[-1] + Offset2D(*s))
    return OffsetTrace(offsets)


def common_crop(trace, frame_size: tuple[int, int]) -> Rect:
    """Largest rectangle valid in every frame once its offset is applied.

    ``frame_size`` is (width, height).
    """
    w, h = frame_size
    dxs = [o.dx for o in trace]
    dys = [o.dy for o in trace]
    x0, y0 = max(0, max(dxs)), max(0, max(dys))
    cw = w - x0 - max(0, -min(dxs))
    ch = h - y0 - max(0, -min(dys))
    if cw < 1 or ch < 1:
        raise DeshakeError("camera motion exceeds frame")
    return Rect(x0, y0, cw, ch)


def measure_trace(frames, cfg: DeshakeConfig, n_jobs=None) -> OffsetTrace:
    """Cumulative correction offsets for a frame sequence.

    Each step is the negated content motion from a frame to its successor,
    so ``translate_crop(frame, trace[i], crop)`` lines every frame up with
    frame 0.  ``frames`` may be a lazy iterable; two grays are held at a
    time.
    """
    cfg.check()
    steps = []
    prev = None
    for i, frame in enumerate(frames):
        gray = to_grayscale(frame)
        if prev is not None:
            try:
                steps.append(-frame_offset(prev, gray, cfg, n_jobs))
            except DeshakeError as exc:
                raise DeshakeError("no usable blocks", frame=i) from exc
        prev = gray
    if prev is None:
        raise ValueError("empty frame sequence")
    return accumulate(steps)


def stabilize(frames, cfg: DeshakeConfig, n_jobs=None) -> tuple[list[np.ndarray], OffsetTrace]:
    frames = check_frames(frames)
    trace = measure_trace(frames, cfg, n_jobs)
    h, w = frames.shape[1:3]
    try:
        crop = common_crop(trace, (w, h))
    except DeshakeError as exc:
        worst = max(range(len(trace)), key=lambda i: abs(trace[i].dx) + abs(trace[i].dy))
        raise DeshakeError("camera motion exceeds frame", frame=worst) from exc
    return [translate_crop(f, o, crop) for f, o in zip(frames, trace)], trace


class Deshaker(TransformerMixin, BaseEstimator):
    """Remove small camera translations from a frame sequence.

    ``fit`` measures the offset trace and common crop; ``transform`` applies
    them to a sequence of the same length.

    Attributes
    ----------
    trace_ : OffsetTrace
    crop_ : Rect
    """

    def __init__(self, max_offset=8, block_size=32, contrast_threshold=4.0, subregion=None, n_jobs=None):
        self.max_offset = max_offset
        self.block_size = block_size
        self.contrast_threshold = contrast_threshold
        self.subregion = subregion
        self.n_jobs = n_jobs

    def _config(self) -> DeshakeConfig:
        sub = self.subregion
        if sub is not None and not isinstance(sub, Rect):
            sub = Rect(*sub)
        return DeshakeConfig(self.max_offset, self.block_size, self.contrast_threshold, sub).check()

    def fit(self, X, y=None):
        X = check_frames(X)
        self.trace_ = measure_trace(X, self._config(), self.n_jobs)
        h, w = X.shape[1:3]
        self.crop_ = common_crop(self.trace_, (w, h))
        self.frame_shape_ = X.shape[1:]
        return self

    def transform(self, X):
        check_is_fitted(self, "trace_")
        X = check_frames(X)
        if len(X) != len(self.trace_):
            raise ValueError(f"fitted on {len(self.trace_)} frames, got {len(X)}")
        return np.stack([translate_crop(f, o, self.crop_) for f, o in zip(X, self.trace_)])
