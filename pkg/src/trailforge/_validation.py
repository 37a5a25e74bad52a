"""Input checks for the estimator front ends."""

from __future__ import annotations

import numpy as np

from .imaging import check_raster


def check_frames(X, name: str = "frames") -> np.ndarray:
    """Return a ``(n, H, W, 3)`` uint8 stack from an array or a list of frames."""
    if isinstance(X, np.ndarray) and X.ndim == 4:
        if X.shape[0] == 0:
            raise ValueError(f"{name}: empty sequence")
        if X.shape[-1] != 3:
            raise ValueError(f"{name} must have 3 channels, got shape {X.shape}")
        return np.ascontiguousarray(X, dtype=np.uint8) if X.dtype != np.uint8 else X
    frames = [check_raster(f, f"{name}[{i}]") for i, f in enumerate(X)]
    if not frames:
        raise ValueError(f"{name}: empty sequence")
    check_same_shape(frames, name)
    return np.stack(frames)


def check_same_shape(frames, name: str = "frames"):
    shape = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise ValueError(f"{name}[{i}] has shape {f.shape}, expected {shape}")


def check_masks(M, name: str = "masks") -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 3:
        raise ValueError(f"{name} must have shape (n, height, width), got {M.shape}")
    return M.astype(bool, copy=False)


def check_matching(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape[:3] != b.shape[:3]:
        raise ValueError(f"{what}: shape mismatch {a.shape[:3]} vs {b.shape[:3]}")
