"""Advisory ghost flags.

A ghost is freshly revealed background that the segmentation still calls
foreground after a long-parked object leaves.  The heuristic here looks for
pairs of nearby objects of similar size and shape where one of them is
colored like its own surroundings; that one is flagged.  Nothing is ever
removed from the masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from ._validation import check_frames, check_masks, check_matching
from .imaging import Rect, check_raster, geometric_median
from .segmentation import EIGHT, LabelMap, label_components

OVERLAY_COLOR = (255, 0, 255)


@dataclass(frozen=True)
class GhostThresholds:
    proximity_factor: float = 4.0
    area_tol: float = 0.5
    comp_tol: float = 0.25
    color_tol: float = 30.0
    spread_threshold: float = 30.0
    dilation_radius: int = 3


@dataclass(frozen=True)
class ObjectStats:
    label: int
    area: int
    bbox: Rect
    compactness: float
    median_color: tuple[float, float, float]
    surroundings_color: tuple[float, float, float] | None
    surroundings_spread: float

    @property
    def too_varied(self) -> bool:
        return self.surroundings_color is None

    @property
    def center(self) -> tuple[float, float]:
        return self.bbox.x0 + self.bbox.width / 2, self.bbox.y0 + self.bbox.height / 2

    @property
    def diagonal(self) -> float:
        return math.hypot(self.bbox.width, self.bbox.height)


@dataclass(frozen=True)
class GhostVerdict:
    label: int
    suspected: bool
    partner_label: int | None = None
    reason: str = ""


def _rgb_dist(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)))


def object_stats(
    lm: LabelMap, frame, thresholds: GhostThresholds | None = None, surroundings: bool = True
) -> list[ObjectStats]:
    """Area, box, compactness and color statistics for every labeled object.

    Surroundings are the object's 8-connected dilation minus all foreground.
    When their RMS spread about their median exceeds the threshold, or there
    are none, the surroundings count as too varied and no color is reported.
    ``surroundings=False`` skips that part (they then read as too varied).
    """
    th = thresholds or GhostThresholds()
    frame = check_raster(frame, "frame")
    if frame.shape[:2] != lm.labels.shape:
        raise ValueError("frame and label map differ in size")
    h, w = lm.labels.shape
    pad = th.dilation_radius
    foreground = lm.labels > 0
    out = []
    for label, box in enumerate(lm.bboxes(), start=1):
        y0, y1 = max(0, box.y0 - pad), min(h, box.y1 + pad)
        x0, x1 = max(0, box.x0 - pad), min(w, box.x1 + pad)
        local = lm.labels[y0:y1, x0:x1] == label
        pixels = frame[y0:y1, x0:x1][local].astype(np.float64)
        area = int(local.sum())
        median = tuple(float(v) for v in geometric_median(pixels))
        sur_color, spread = None, math.inf
        around = ()
        if surroundings:
            ring = ndimage.binary_dilation(local, structure=EIGHT, iterations=pad) & ~foreground[y0:y1, x0:x1]
            around = frame[y0:y1, x0:x1][ring].astype(np.float64)
        if len(around):
            sur = geometric_median(around)
            spread = float(np.sqrt(np.mean(np.sum((around - sur) ** 2, axis=1))))
            if spread <= th.spread_threshold:
                sur_color = tuple(float(v) for v in sur)
        out.append(ObjectStats(label, area, box, area / box.area, median, sur_color, spread))
    return out


def _similar(a: ObjectStats, b: ObjectStats, th: GhostThresholds) -> bool:
    dist = math.dist(a.center, b.center)
    if dist >= th.proximity_factor * max(a.diagonal, b.diagonal):
        return False
    if abs(a.area - b.area) / max(a.area, b.area) > th.area_tol:
        return False
    return abs(a.compactness - b.compactness) <= th.comp_tol


def flag_ghosts(stats: list[ObjectStats], thresholds: GhostThresholds | None = None) -> list[GhostVerdict]:
    """One verdict per object; ``suspected`` marks probable ghosts."""
    th = thresholds or GhostThresholds()
    flagged: dict[int, GhostVerdict] = {}
    pairs = [
        (math.dist(a.center, b.center), i, j)
        for i, a in enumerate(stats)
        for j, b in enumerate(stats)
        if i < j and _similar(a, b, th)
    ]
    for _, i, j in sorted(pairs):
        a, b = stats[i], stats[j]
        match = {
            s.label: _rgb_dist(s.median_color, s.surroundings_color) if not s.too_varied else math.inf
            for s in (a, b)
        }
        ghost, other = (a, b) if match[a.label] <= match[b.label] else (b, a)
        if ghost.too_varied or ghost.label in flagged:
            continue
        own = match[ghost.label]
        if own <= th.color_tol and own < _rgb_dist(ghost.median_color, other.median_color):
            flagged[ghost.label] = GhostVerdict(
                ghost.label,
                True,
                other.label,
                f"matches surroundings ({own:.1f}) better than object {other.label}",
            )
    return [flagged.get(s.label, GhostVerdict(s.label, False)) for s in stats]


def verdicts_tsv(verdicts: list[GhostVerdict]) -> str:
    lines = ["label\tsuspected\tpartner\treason"]
    for v in verdicts:
        partner = "" if v.partner_label is None else str(v.partner_label)
        lines.append(f"{v.label}\t{int(v.suspected)}\t{partner}\t{v.reason}")
    return "\n".join(lines) + "\n"


def objects_tsv(stats: list[ObjectStats]) -> str:
    lines = ["label\tarea\tx0\ty0\twidth\theight\tcompactness\tmedian_r\tmedian_g\tmedian_b"]
    for s in stats:
        r, g, b = (int(math.floor(c + 0.5)) for c in s.median_color)
        box = s.bbox
        lines.append(
            f"{s.label}\t{s.area}\t{box.x0}\t{box.y0}\t{box.width}\t{box.height}\t{s.compactness:.6f}\t{r}\t{g}\t{b}"
        )
    return "\n".join(lines) + "\n"


def draw_overlay(frame, stats: list[ObjectStats], verdicts: list[GhostVerdict]) -> np.ndarray:
    """Copy of ``frame`` with a one-pixel box around each suspected ghost."""
    out = check_raster(frame).copy()
    boxes = {s.label: s.bbox for s in stats}
    for v in verdicts:
        if not v.suspected:
            continue
        b = boxes[v.label]
        out[b.y0, b.x0 : b.x1] = OVERLAY_COLOR
        out[b.y1 - 1, b.x0 : b.x1] = OVERLAY_COLOR
        out[b.y0 : b.y1, b.x0] = OVERLAY_COLOR
        out[b.y0 : b.y1, b.x1 - 1] = OVERLAY_COLOR
    return out


class GhostDetector(BaseEstimator):
    """Flag probable ghosts per frame.  ``predict`` returns verdict lists."""

    def __init__(self, proximity_factor=4.0, area_tol=0.5, comp_tol=0.25, color_tol=30.0,
                 spread_threshold=30.0, dilation_radius=3):
        self.proximity_factor = proximity_factor
        self.area_tol = area_tol
        self.comp_tol = comp_tol
        self.color_tol = color_tol
        self.spread_threshold = spread_threshold
        self.dilation_radius = dilation_radius

    def thresholds(self) -> GhostThresholds:
        return GhostThresholds(**self.get_params())

    def fit(self, X=None, y=None):
        return self

    def predict(self, X, masks) -> list[list[GhostVerdict]]:
        X = check_frames(X)
        masks = check_masks(masks)
        check_matching(X, masks, "frames vs masks")
        th = self.thresholds()
        return [flag_ghosts(object_stats(label_components(m), f, th), th) for f, m in zip(X, masks)]
