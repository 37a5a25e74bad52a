"""Frame files: PNG and binary PPM in, PNG out.

A sequence is a directory of numbered files whose lexicographic order is
their temporal order.  ``FrameSequence`` decodes lazily and counts decodes,
which is how the streaming stages prove they read each frame once.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .exceptions import FrameIOError
from .imaging import check_raster

FRAME_SUFFIXES = (".png", ".ppm")
_ACCEPTED_MODES = ("RGB", "RGBA", "L", "LA", "P", "1")


def frame_name(index: int, suffix: str = ".png") -> str:
    return f"frame_{index:06d}{suffix}"


def list_frames(directory) -> list[Path]:
    """Frame files in ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FrameIOError(f"input directory not found: {directory}")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES and p.is_file())
    if not paths:
        raise FrameIOError(f"no .png or .ppm frames in {directory}")
    return paths


def probe_size(path) -> tuple[int, int]:
    """(width, height) from the file header, without decoding pixels."""
    try:
        with Image.open(path) as img:
            if img.mode not in _ACCEPTED_MODES:
                raise FrameIOError(f"{path}: unsupported pixel format {img.mode}")
            return img.size
    except (OSError, UnidentifiedImageError) as exc:
        if isinstance(exc, FrameIOError):
            raise
        raise FrameIOError(f"{path}: {exc}") from exc


def read_frame(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode not in _ACCEPTED_MODES:
                raise FrameIOError(f"{path}: unsupported pixel format {img.mode}")
            return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
    except FrameIOError:
        raise
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise FrameIOError(f"{path}: {exc}") from exc


def _atomic_save(img: Image.Image, path: Path, fmt: str):
    # a crash mid-write must not leave a truncated file that looks cached
    tmp = path.with_name(f".{path.name}.tmp")
    img.save(tmp, format=fmt)
    os.replace(tmp, path)


def write_frame(path, frame) -> None:
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() == ".ppm" else "PNG"
    _atomic_save(Image.fromarray(check_raster(frame)), path, fmt)


def write_mask(path, mask) -> None:
    """1-bit PNG; reads back as 0 (background) / 255 (foreground)."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    _atomic_save(Image.fromarray(m), Path(path), "PNG")


def read_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L")) > 127
    except (OSError, UnidentifiedImageError) as exc:
        raise FrameIOError(f"{path}: {exc}") from exc


def write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


class FrameSequence:
    """Read-only, lazily decoded frame list.

    ``decode_count`` counts actual decodes.  ``check()`` opens every header
    and reports all unreadable files and the first size mismatch.
    """

    def __init__(self, paths):
        self.paths = [Path(p) for p in paths]
        if not self.paths:
            raise FrameIOError("empty frame sequence")
        self.decode_count = 0
        self._lock = threading.Lock()
        self._size = None

    @classmethod
    def from_directory(cls, directory) -> "FrameSequence":
        return cls(list_frames(directory))

    def __len__(self):
        return len(self.paths)

    def check(self) -> tuple[int, int]:
        bad, sizes = [], []
        for p in self.paths:
            try:
                sizes.append(probe_size(p))
            except FrameIOError as exc:
                bad.append(str(exc))
                sizes.append(None)
        if bad:
            raise FrameIOError(f"{len(bad)} unreadable frame(s):\n  " + "\n  ".join(bad))
        for i, s in enumerate(sizes):
            if s != sizes[0]:
                raise FrameIOError(f"frame {i} ({self.paths[i].name}) is {s[0]}x{s[1]}, expected {sizes[0][0]}x{sizes[0][1]}")
        self._size = sizes[0]
        return self._size

    def __getitem__(self, i: int) -> np.ndarray:
        frame = read_frame(self.paths[i])
        with self._lock:
            self.decode_count += 1
        if self._size is not None and frame.shape[1::-1] != self._size:
            raise FrameIOError(f"frame {i} ({self.paths[i].name}) changed size while reading")
        return frame

    def __iter__(self):
        for i in range(len(self.paths)):
            yield self[i]
