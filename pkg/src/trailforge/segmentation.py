"""Foreground masks from frame/background pairs.

A thresholded color difference gives the first guess, which is then refined
from small features to large: pinholes, disk smoothing, culling of tiny and
sliver-thin objects, then filling of holes and near-holes.  Masks are
boolean ``(H, W)`` arrays with True for foreground.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._parallel import map_ordered
from ._validation import check_frames, check_matching
from .imaging import Rect, check_raster, color_distance, rgb_to_ycc

EIGHT = np.ones((3, 3), dtype=bool)
FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class SegmentationConfig:
    color_threshold: float = 18.0
    chroma_weight: float = 2.0
    disk_schedule: tuple[tuple[int, float], ...] = ((2, 0.5), (3, 0.5), (5, 0.5))
    min_area_fraction: float = 1e-4
    min_thickness: int = 2
    min_aspect: float = 25.0
    near_hole_max_iters: int = 4

    def problems(self) -> list[str]:
        out = []
        radii = [r for r, _ in self.disk_schedule]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            out.append("segment.disk_schedule radii must be strictly increasing")
        if any(r < 1 for r in radii):
            out.append("segment.disk_schedule radii must be >= 1")
        if any(not 0 < f < 1 for _, f in self.disk_schedule):
            out.append("segment.disk_schedule fractions must lie strictly between 0 and 1")
        if self.min_area_fraction <= 0:
            out.append("segment.min_area_fraction must be > 0")
        if self.chroma_weight < 1:
            out.append("segment.chroma_weight must be >= 1")
        if self.color_threshold < 0:
            out.append("segment.color_threshold must be >= 0")
        if self.min_thickness < 0 or self.min_aspect < 1:
            out.append("segment.min_thickness must be >= 0 and min_aspect >= 1")
        if self.near_hole_max_iters < 0:
            out.append("segment.near_hole_max_iters must be >= 0")
        return out


@dataclass
class LabelMap:
    """Connected components of a mask; label 0 is background."""

    labels: np.ndarray
    count: int
    _areas: np.ndarray | None = field(default=None, repr=False)

    @property
    def areas(self) -> np.ndarray:
        """Pixel count per label, indexed by label (entry 0 unused)."""
        if self._areas is None:
            self._areas = np.bincount(self.labels.ravel(), minlength=self.count + 1)
        return self._areas

    def bboxes(self) -> list[Rect]:
        return [
            Rect(s[1].start, s[0].start, s[1].stop - s[1].start, s[0].stop - s[0].start)
            for s in ndimage.find_objects(self.labels, self.count)
        ]

    def mask(self) -> np.ndarray:
        return self.labels > 0

    def keep(self, keep: np.ndarray) -> np.ndarray:
        """Mask of the labels flagged in ``keep`` (indexed by label)."""
        keep = np.asarray(keep, dtype=bool).copy()
        keep[0] = False
        return keep[self.labels]


def raw_mask(frame, bg, color_threshold: float = 18.0, chroma_weight: float = 2.0) -> np.ndarray:
    frame = check_raster(frame, "frame")
    bg = check_raster(bg, "background")
    if frame.shape != bg.shape:
        raise ValueError(f"frame {frame.shape} and background {bg.shape} differ in size")
    return color_distance(rgb_to_ycc(frame), rgb_to_ycc(bg), chroma_weight) > color_threshold


def remove_pinholes(m: np.ndarray) -> np.ndarray:
    """Flip every pixel whose in-bounds 4-neighbors all disagree with it.

    One simultaneous pass; repeating it is left to the coarser refinements.
    """
    m = np.asarray(m, dtype=bool)
    pad_v = np.pad(m, 1).astype(np.int8)
    pad_in = np.pad(np.ones_like(m, dtype=np.int8), 1)
    like = np.zeros(m.shape, dtype=np.int8)
    present = np.zeros(m.shape, dtype=np.int8)
    h, w = m.shape
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nb_v = pad_v[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        nb_in = pad_in[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        present += nb_in
        like += nb_in * (nb_v == m)
    return m ^ ((like == 0) & (present > 0))


@lru_cache(maxsize=32)
def disk(radius: int) -> np.ndarray:
    """Boolean structuring element of all offsets within Euclidean ``radius``."""
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def _disk_counts(m: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    k = disk(radius).astype(np.int32)
    fg = ndimage.correlate(m.astype(np.int32), k, mode="constant", cval=0)
    inside = ndimage.correlate(np.ones(m.shape, dtype=np.int32), k, mode="constant", cval=0)
    return fg, inside


def disk_smooth(m: np.ndarray, radius: int, majority: float) -> np.ndarray:
    """Foreground where the in-bounds disk around a pixel is more than ``majority`` foreground."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    m = np.asarray(m, dtype=bool)
    fg, inside = _disk_counts(m, radius)
    return fg > majority * inside


def smooth_schedule(m: np.ndarray, schedule) -> np.ndarray:
    m = np.asarray(m, dtype=bool)
    for radius, majority in schedule:
        m = disk_smooth(m, radius, majority)
    return m


def label_components(m: np.ndarray) -> LabelMap:
    """8-connected labeling, numbered in raster order of each component's first pixel."""
    m = np.asarray(m, dtype=bool)
    labels, count = ndimage.label(m, structure=EIGHT)
    if count:
        flat = labels.ravel()
        _, first = np.unique(flat, return_index=True)
        ids = flat[np.sort(first)]
        ids = ids[ids > 0]
        if not np.array_equal(ids, np.arange(1, count + 1)):
            remap = np.zeros(count + 1, dtype=labels.dtype)
            remap[ids] = np.arange(1, count + 1)
            labels = remap[labels]
    return LabelMap(labels, int(count))


def cull_small(lm: LabelMap, frame_area: int, min_area_fraction: float = 1e-4) -> np.ndarray:
    """Drop components with area strictly below ``min_area_fraction * frame_area``."""
    return lm.keep(lm.areas >= min_area_fraction * frame_area)


def cull_thin(lm: LabelMap, min_thickness: int = 2, min_aspect: float = 25.0) -> np.ndarray:
    """Drop components whose axis-aligned bounding box is too thin or too elongated."""
    keep = np.ones(lm.count + 1, dtype=bool)
    for i, box in enumerate(lm.bboxes(), start=1):
        short, long = sorted((box.width, box.height))
        if short < min_thickness or long / short > min_aspect:
            keep[i] = False
    return lm.keep(keep)


def _object_holes(obj: np.ndarray) -> np.ndarray:
    # background 4-components of a cropped object that avoid the crop border
    inv = ~obj
    labels, count = ndimage.label(inv, structure=FOUR)
    if count == 0:
        return np.zeros_like(obj)
    border = np.zeros(count + 1, dtype=bool)
    for edge in (labels[0], labels[-1], labels[:, 0], labels[:, -1]):
        border[edge] = True
    border[0] = True
    return ~border[labels]


def fill_holes(m: np.ndarray, lm: LabelMap, label: int, box: Rect | None = None) -> np.ndarray:
    """Fill the holes of one labeled object.

    Inside the object's bounding box, every 4-connected non-object region
    that does not touch the box border becomes foreground.
    """
    if box is None:
        box = lm.bboxes()[label - 1]
    sl = box.slices
    holes = _object_holes(lm.labels[sl] == label)
    out = np.array(m, dtype=bool, copy=True)
    out[sl] |= holes
    return out


def fill_all_holes(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=bool)
    lm = label_components(m)
    out = m.copy()
    for label, box in enumerate(lm.bboxes(), start=1):
        if box.width > 2 and box.height > 2:
            out[box.slices] |= _object_holes(lm.labels[box.slices] == label)
    return out


def fill_near_holes(m: np.ndarray, cfg: SegmentationConfig | None = None) -> np.ndarray:
    """Close bays that a one-pixel dilation would turn into lakes.

    Each round dilates a working copy, takes the holes that appear in it,
    paints them into the undilated mask, then smooths the leftover moat with
    a disk one pixel wider than the previous round's.  Smoothing only acts
    near the newly filled regions.  A final hole fill catches holes the
    smoothing may have created.
    """
    cfg = cfg or SegmentationConfig()
    if cfg.disk_schedule:
        radius, majority = cfg.disk_schedule[-1]
    else:
        radius, majority = 1, 0.5
    work = np.asarray(m, dtype=bool).copy()
    for it in range(cfg.near_hole_max_iters):
        dilated = ndimage.binary_dilation(work, structure=EIGHT)
        enclosed = fill_all_holes(dilated) & ~dilated
        if not enclosed.any():
            break
        r = radius + it
        candidate = work | enclosed
        zone = ndimage.binary_dilation(enclosed, structure=disk(r + 1))
        smoothed = disk_smooth(candidate, r, majority)
        candidate = np.where(zone, smoothed | enclosed, candidate)
        if np.array_equal(candidate, work):
            break
        work = candidate
    return fill_all_holes(work)


def segment_frame(frame, bg, cfg: SegmentationConfig | None = None) -> np.ndarray:
    """Full refinement chain for one frame."""
    cfg = cfg or SegmentationConfig()
    m = raw_mask(frame, bg, cfg.color_threshold, cfg.chroma_weight)
    m = remove_pinholes(m)
    m = smooth_schedule(m, cfg.disk_schedule)
    m = cull_small(label_components(m), m.size, cfg.min_area_fraction)
    m = cull_thin(label_components(m), cfg.min_thickness, cfg.min_aspect)
    m = fill_all_holes(m)
    return fill_near_holes(m, cfg)


class ForegroundSegmenter(TransformerMixin, BaseEstimator):
    """Per-frame foreground masks against a background stream.

    ``transform(X, backgrounds)`` returns a boolean ``(n, H, W)`` array.
    Frames are independent, so ``n_jobs`` threads split them.
    """

    def __init__(
        self,
        color_threshold=18.0,
        chroma_weight=2.0,
        disk_schedule=((2, 0.5), (3, 0.5), (5, 0.5)),
        min_area_fraction=1e-4,
        min_thickness=2,
        min_aspect=25.0,
        near_hole_max_iters=4,
        n_jobs=None,
    ):
        self.color_threshold = color_threshold
        self.chroma_weight = chroma_weight
        self.disk_schedule = disk_schedule
        self.min_area_fraction = min_area_fraction
        self.min_thickness = min_thickness
        self.min_aspect = min_aspect
        self.near_hole_max_iters = near_hole_max_iters
        self.n_jobs = n_jobs

    def config(self) -> SegmentationConfig:
        cfg = SegmentationConfig(
            self.color_threshold,
            self.chroma_weight,
            tuple((int(r), float(f)) for r, f in self.disk_schedule),
            self.min_area_fraction,
            self.min_thickness,
            self.min_aspect,
            self.near_hole_max_iters,
        )
        problems = cfg.problems()
        if problems:
            raise ValueError("; ".join(problems))
        return cfg

    def fit(self, X, y=None):
        self.config()
        return self

    def transform(self, X, backgrounds):
        X = check_frames(X)
        B = check_frames(backgrounds, "backgrounds")
        check_matching(X, B, "frames vs backgrounds")
        cfg = self.config()
        masks = map_ordered(lambda i: segment_frame(X[i], B[i], cfg), range(len(X)), self.n_jobs)
        return np.stack(masks)
