"""Image containers, color conversions and the geometric median.

Frames are plain numpy arrays: RGB rasters are ``(height, width, 3)`` uint8,
gray images are ``(height, width)`` float64.  Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

# Rec. 601 full-range (JFIF) coefficients.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
_YCC_MATRIX = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC_OFFSET = np.array([0.0, 128.0, 128.0])

DEFAULT_TOL = 0.05
DEFAULT_MAX_ITER = 100


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle: origin plus size."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"negative rect origin ({self.x0}, {self.y0})")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"empty rect {self.width}x{self.height}")

    @property
    def x1(self) -> int:
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        return self.y0 + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def fits(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    @classmethod
    def full(cls, width: int, height: int) -> "Rect":
        return cls(0, 0, width, height)


@dataclass(frozen=True)
class Offset2D:
    """Integer translation in pixels."""

    dx: int = 0
    dy: int = 0

    def __add__(self, other: "Offset2D") -> "Offset2D":
        return Offset2D(self.dx + other.dx, self.dy + other.dy)

    def __sub__(self, other: "Offset2D") -> "Offset2D":
        return Offset2D(self.dx - other.dx, self.dy - other.dy)

    def __neg__(self) -> "Offset2D":
        return Offset2D(-self.dx, -self.dy)

    def __iter__(self):
        yield self.dx
        yield self.dy


def check_raster(img, name: str = "image") -> np.ndarray:
    """Validate an RGB raster and return it as a uint8 ``(H, W, 3)`` array."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (height, width, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} is empty")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.integer) and arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError(f"{name} has channel values outside 0-255")
        arr = arr.astype(np.uint8)
    return arr


def to_grayscale(img) -> np.ndarray:
    img = check_raster(img)
    return img.astype(np.float64) @ LUMA_WEIGHTS


def rgb_to_ycc(rgb) -> np.ndarray:
    """Convert RGB triples (any leading shape) to full-range YCbCr floats.

    Chroma is clipped to 0-255, so saturated primaries land on the range edge
    instead of half a unit past it.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    ycc = rgb @ _YCC_MATRIX.T + _YCC_OFFSET
    return np.clip(ycc, 0.0, 255.0)


def color_distance(a, b, chroma_weight: float = 2.0) -> np.ndarray | float:
    """Euclidean YCbCr distance with both chroma axes scaled by ``chroma_weight``."""
    if chroma_weight < 1:
        raise ValueError("chroma_weight must be >= 1")
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    dist = np.sqrt(d[..., 0] ** 2 + chroma_weight**2 * (d[..., 1] ** 2 + d[..., 2] ** 2))
    return float(dist) if np.ndim(dist) == 0 else dist


ANCHOR_CANDIDATES = 8


@njit(cache=True)
def _pull(points, j):
    # Seen from input point j: its multiplicity, the sum of unit vectors to
    # every other point, and the inverse-distance weighted sums over them.
    n, d = points.shape
    pull = np.zeros(d)
    num = np.zeros(d)
    den = 0.0
    weight = 0
    for i in range(n):
        s = 0.0
        for k in range(d):
            diff = points[i, k] - points[j, k]
            s += diff * diff
        if s == 0.0:
            weight += 1
            continue
        w = 1.0 / np.sqrt(s)
        den += w
        for k in range(d):
            pull[k] += (points[i, k] - points[j, k]) * w
            num[k] += points[i, k] * w
    return weight, np.sqrt(np.sum(pull * pull)), num, den


@njit(cache=True)
def _weiszfeld(points, tol, max_iter):
    n, d = points.shape
    x = np.zeros(d)
    for i in range(n):
        for k in range(d):
            x[k] += points[i, k]
    for k in range(d):
        x[k] /= n
    num = np.empty(d)
    nxt = np.empty(d)
    for _ in range(max_iter):
        for k in range(d):
            num[k] = 0.0
        den = 0.0
        nearest = -1
        nearest_dist = tol
        for i in range(n):
            s = 0.0
            for k in range(d):
                diff = points[i, k] - x[k]
                s += diff * diff
            dist = np.sqrt(s)
            if dist < nearest_dist:
                nearest = i
                nearest_dist = dist
            elif nearest < 0:
                w = 1.0 / dist
                den += w
                for k in range(d):
                    num[k] += w * points[i, k]
        if nearest >= 0:
            weight, pull, num, den = _pull(points, nearest)
            if pull <= weight:
                return points[nearest].copy()
            # not the minimizer: step off it as Vardi and Zhang do
            shrink = 1.0 - weight / pull
            for k in range(d):
                nxt[k] = points[nearest, k] + shrink * (num[k] / den - points[nearest, k])
        else:
            for k in range(d):
                nxt[k] = num[k] / den
        step = 0.0
        for k in range(d):
            diff = nxt[k] - x[k]
            step += diff * diff
            x[k] = nxt[k]
        if np.sqrt(step) < tol:
            break
    return _settle_on_anchor(points, x)


@njit(cache=True)
def _settle_on_anchor(points, x):
    # Weiszfeld crawls toward a minimizer that sits on an input point, so the
    # step rule can stop well short of it.  Test the input points nearest the
    # final iterate directly and return one if it is the unique minimizer.
    n, d = points.shape
    dist = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(d):
            diff = points[i, k] - x[k]
            s += diff * diff
        dist[i] = s
    order = np.argsort(dist, kind="mergesort")
    tried = 0
    prev = -1
    for j in order:
        if prev >= 0 and np.all(points[j] == points[prev]):
            continue
        prev = j
        weight, pull, _, _ = _pull(points, j)
        # strict, with margin for rounding: on ties the minimizer is not
        # unique and the iterate is as good an answer as any
        if pull < weight * (1.0 - 1e-9):
            return points[j].copy()
        tried += 1
        if tried == ANCHOR_CANDIDATES:
            break
    return x


def geometric_median(points, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Approximate the point minimizing the summed Euclidean distance to ``points``.

    Weiszfeld iteration started from the coordinate-wise mean.  Stops once a
    step is shorter than ``tol`` or after ``max_iter`` steps.  An iterate that
    lands within ``tol`` of an input point returns that point exactly if it
    is the minimizer, and otherwise takes the Vardi-Zhang step away from it.
    When iteration stops near an input point that is provably the minimizer,
    that point is returned instead of the iterate.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] == 0:
        raise ValueError("no points")
    if tol <= 0:
        raise ValueError("tol must be positive")
    return _weiszfeld(np.ascontiguousarray(pts), float(tol), int(max_iter))


def translate_crop(img, offset: Offset2D, crop: Rect) -> np.ndarray:
    """Sample ``crop`` out of ``img`` after moving the image by ``offset``.

    Output pixel (x, y) is input pixel (crop.x0 + x - dx, crop.y0 + y - dy).
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    dx, dy = offset
    sx, sy = crop.x0 - dx, crop.y0 - dy
    if sx < 0 or sy < 0 or sx + crop.width > w or sy + crop.height > h:
        raise ValueError("crop exceeds frame")
    return img[sy : sy + crop.height, sx : sx + crop.width].copy()


def round_half_up(values) -> np.ndarray:
    """Round to nearest with halves going up; used wherever floats become 8-bit."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


def to_uint8(values) -> np.ndarray:
    return np.clip(round_half_up(values), 0, 255).astype(np.uint8)
