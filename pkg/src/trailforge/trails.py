"""Fade-weighted overlay of foregrounds onto backgrounds.

For output frame n, every frame m whose foreground is still fading
contributes its masked pixels with weight ``fade_weight(profile, n - m)``.
Where several foregrounds cover a pixel, the heaviest one wins by default and
the background takes whatever weight it leaves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._parallel import map_ordered
from ._validation import check_frames, check_masks, check_matching
from .imaging import LUMA_WEIGHTS, check_raster, round_half_up, to_uint8

CURVES = {"linear": 1, "quadratic": 2, "cubic": 3}
STYLES = ("normal", "desaturated", "erased")
COMBINE = ("heaviest", "rescale", "accumulate")
ERASED_GRAY = 128


@dataclass(frozen=True)
class FadeProfile:
    pre_frames: int = 0
    post_frames: int = 10
    curve: str = "linear"

    def __post_init__(self):
        if self.pre_frames < 0 or self.post_frames < 0:
            raise ValueError("fade lengths must be >= 0")
        if self.pre_frames + self.post_frames < 1:
            raise ValueError("fade needs at least one of pre_frames/post_frames")
        if self.curve not in CURVES:
            raise ValueError(f"curve must be one of {sorted(CURVES)}")


@dataclass(frozen=True)
class RenderConfig:
    profile: FadeProfile = FadeProfile()
    background_style: str = "normal"
    combine: str = "heaviest"

    def __post_init__(self):
        if self.background_style not in STYLES:
            raise ValueError(f"background_style must be one of {STYLES}")
        if self.combine not in COMBINE:
            raise ValueError(f"combine must be one of {COMBINE}")


@dataclass(frozen=True)
class OverlayCandidate:
    source_frame: int
    color: tuple[int, int, int]
    weight: float
    dt: int = 0


def fade_weight(profile: FadeProfile, dt: int) -> float:
    """Overlay weight of a foreground ``dt`` frames before the output frame.

    ``dt = output - source``; positive values are the trail behind an object,
    negative values its fade-in.  The last nonzero echo is at ``dt = post``.
    """
    if dt == 0:
        return 1.0
    span = profile.post_frames if dt > 0 else profile.pre_frames
    if abs(dt) > span:
        return 0.0
    return (1.0 - abs(dt) / (span + 1)) ** CURVES[profile.curve]


def _priority(c: OverlayCandidate):
    # heaviest, then nearest in time, then most recent source
    return (-c.weight, abs(c.dt), -c.source_frame)


def composite_pixel(bg, candidates, combine: str = "heaviest") -> tuple[int, int, int]:
    """Blend the candidates over one background pixel and round to 8 bits."""
    bg = np.asarray(bg, dtype=np.float64)
    live = sorted((c for c in candidates if c.weight > 0), key=_priority)
    if not live:
        return tuple(int(v) for v in bg)
    if combine == "heaviest":
        pairs = [(live[0].weight, live[0].color)]
    elif combine == "rescale":
        total = sum(c.weight for c in live)
        scale = live[0].weight / total
        pairs = [(c.weight * scale, c.color) for c in live]
    elif combine == "accumulate":
        pairs, used = [], 0.0
        for c in live:
            take = min(c.weight, 1.0 - used)
            if take <= 0:
                break
            pairs.append((take, c.color))
            used += take
    else:
        raise ValueError(f"combine must be one of {COMBINE}")
    fg_weight = sum(w for w, _ in pairs)
    out = (1.0 - fg_weight) * bg
    for w, color in pairs:
        out = out + w * np.asarray(color, dtype=np.float64)
    return tuple(int(v) for v in np.clip(round_half_up(out), 0, 255))


def restyle_background(bg, style: str = "normal") -> np.ndarray:
    bg = check_raster(bg, "background")
    if style == "normal":
        return bg
    if style == "desaturated":
        gray = to_uint8(bg.astype(np.float64) @ LUMA_WEIGHTS)
        return np.repeat(gray[..., None], 3, axis=2)
    if style == "erased":
        return np.full_like(bg, ERASED_GRAY)
    raise ValueError(f"background_style must be one of {STYLES}")


def source_range(n: int, count: int, profile: FadeProfile) -> range:
    """Source frames that can appear in output ``n``."""
    return range(max(0, n - profile.post_frames), min(count, n + profile.pre_frames + 1))


def _sources(n: int, count: int, profile: FadeProfile):
    # (source index, dt, weight) for every frame that can show in output n,
    # highest priority first
    out = []
    for m in source_range(n, count, profile):
        w = fade_weight(profile, n - m)
        if w > 0:
            out.append(OverlayCandidate(m, (0, 0, 0), w, n - m))
    out.sort(key=_priority)
    return [(c.source_frame, c.dt, c.weight) for c in out]


def render_frame(n: int, frames, backgrounds, masks, cfg: RenderConfig, count: int | None = None) -> np.ndarray:
    """Composite output frame ``n`` from the three aligned streams.

    The streams only need item access, so mappings holding just the frames
    near ``n`` work; pass the sequence length as ``count`` then.
    """
    count = len(frames) if count is None else count
    bg = restyle_background(backgrounds[n], cfg.background_style).astype(np.float64)
    sources = _sources(n, count, cfg.profile)
    h, w = masks[n].shape
    if cfg.combine == "heaviest":
        weight = np.zeros((h, w))
        color = np.zeros((h, w, 3))
        # paint lowest priority first so the winner lands last
        for m, _, wt in reversed(sources):
            sel = masks[m]
            weight[sel] = wt
            color[sel] = frames[m][sel]
        out = weight[..., None] * color + (1.0 - weight[..., None]) * bg
        return to_uint8(out)
    # blend modes need every contributor per pixel
    heaviest = np.zeros((h, w))
    total = np.zeros((h, w))
    used = np.zeros((h, w))
    acc = np.zeros((h, w, 3))
    for m, _, wt in sources:
        sel = masks[m]
        if cfg.combine == "rescale":
            heaviest = np.where(sel & (heaviest == 0), wt, heaviest)
            total += sel * wt
            acc += (sel * wt)[..., None] * frames[m]
        else:
            take = np.where(sel, np.minimum(wt, 1.0 - used), 0.0)
            used += take
            acc += take[..., None] * frames[m]
    if cfg.combine == "rescale":
        scale = np.divide(heaviest, total, out=np.zeros_like(total), where=total > 0)
        out = acc * scale[..., None] + (1.0 - heaviest)[..., None] * bg
    else:
        out = acc + (1.0 - used)[..., None] * bg
    return to_uint8(out)


def render_sequence(frames, backgrounds, masks, cfg: RenderConfig, n_jobs=None) -> list[np.ndarray]:
    frames = check_frames(frames)
    backgrounds = check_frames(backgrounds, "backgrounds")
    masks = check_masks(masks)
    check_matching(frames, backgrounds, "frames vs backgrounds")
    check_matching(frames, masks, "frames vs masks")
    return map_ordered(lambda n: render_frame(n, frames, backgrounds, masks, cfg), range(len(frames)), n_jobs)


class TrailRenderer(TransformerMixin, BaseEstimator):
    """Overlay fading foreground copies onto each background.

    Parameters
    ----------
    post_frames, pre_frames : int
        Trail length behind, and fade-in ahead of, each source frame.
        ``pre_frames=0`` gives a pure fade-out with a sharp onset.
    curve : {"linear", "quadratic", "cubic"}
        Steeper curves make long trails start abruptly.
    background_style : {"normal", "desaturated", "erased"}
    combine : {"heaviest", "rescale", "accumulate"}
    """

    def __init__(self, post_frames=10, pre_frames=0, curve="linear", background_style="normal",
                 combine="heaviest", n_jobs=None):
        self.post_frames = post_frames
        self.pre_frames = pre_frames
        self.curve = curve
        self.background_style = background_style
        self.combine = combine
        self.n_jobs = n_jobs

    def config(self) -> RenderConfig:
        profile = FadeProfile(self.pre_frames, self.post_frames, self.curve)
        return RenderConfig(profile, self.background_style, self.combine)

    def fit(self, X, y=None):
        self.config()
        return self

    def transform(self, X, backgrounds, masks):
        return np.stack(render_sequence(X, backgrounds, masks, self.config(), self.n_jobs))
