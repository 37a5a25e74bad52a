"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

from collections import deque
from itertools import product

import numpy as np


def distance_sum(points, x):
    return float(np.sum(np.linalg.norm(np.asarray(points, float) - x, axis=1)))


def grid_median(points, resolution=1e-4, steps=40):
    """Coarse-to-fine grid search for the minimizer of the distance sum.

    The objective is convex, so shrinking the search box around the best
    candidate keeps the minimum inside.  The input points themselves are
    candidates at every level, since the minimum often sits on one of them
    where the objective has a kink that a grid can step over.
    """
    pts = np.asarray(points, dtype=float)

    def cost(cands):
        total = np.zeros(len(cands))
        for p in pts:
            total += np.linalg.norm(cands - p, axis=1)
        return total

    lo, hi = pts.min(axis=0), pts.max(axis=0)
    best = (lo + hi) / 2
    span = np.maximum(hi - lo, resolution)
    while True:
        axes = [np.linspace(b - s / 2, b + s / 2, steps + 1) for b, s in zip(best, span)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, pts.shape[1])
        cands = np.vstack([grid, pts, best[None]])
        best = cands[np.argmin(cost(cands))]
        spacing = span / steps
        if spacing.max() < resolution:
            return best
        span = spacing * 6


def flood_labels(mask):
    """8-connected labels by BFS, numbered in raster order of first pixel."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int64)
    n = 0
    for y, x in product(range(h), range(w)):
        if not mask[y, x] or labels[y, x]:
            continue
        n += 1
        labels[y, x] = n
        queue = deque([(y, x)])
        while queue:
            cy, cx = queue.popleft()
            for dy, dx in product((-1, 0, 1), repeat=2):
                ny, nx = cy + dy, cx + dx
                if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not labels[ny, nx]:
                    labels[ny, nx] = n
                    queue.append((ny, nx))
    return labels, n


def brute_offset(ref, tgt, x0, y0, size, max_offset):
    """Exhaustive RMS search with the documented tie order."""
    ref = np.asarray(ref, float)
    tgt = np.asarray(tgt, float)
    block = ref[y0 : y0 + size, x0 : x0 + size]
    best = None
    for dy in range(-max_offset, max_offset + 1):
        for dx in range(-max_offset, max_offset + 1):
            cand = tgt[y0 + dy : y0 + dy + size, x0 + dx : x0 + dx + size]
            rms = float(np.sqrt(np.mean((block - cand) ** 2)))
            key = (rms, abs(dx) + abs(dy), dy, dx)
            if best is None or key < best[0]:
                best = (key, (dx, dy), rms)
    return best[1], best[2]


def two_pass_std(values):
    v = np.asarray(values, float).ravel()
    mean = sum(v) / len(v)
    return (sum((x - mean) ** 2 for x in v) / len(v)) ** 0.5


def valid_crop(offsets, width, height):
    """Intersect each frame's valid read window, pixel by pixel."""
    ok = np.ones((height, width), dtype=bool)
    for dx, dy in offsets:
        frame_ok = np.zeros((height, width), dtype=bool)
        # output pixel (x, y) reads input (x - dx, y - dy)
        ys, xs = np.mgrid[0:height, 0:width]
        frame_ok[((xs - dx) >= 0) & ((xs - dx) < width) & ((ys - dy) >= 0) & ((ys - dy) < height)] = True
        ok &= frame_ok
    ys, xs = np.nonzero(ok)
    return xs.min(), ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1
