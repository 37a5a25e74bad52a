"""Content-hashed stage caches.

Each stage directory holds a ``manifest.txt`` recording the hash of what went
in, the hash of the stage's own settings, and the hash of what came out.  A
stage is skipped only when all three still match.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .io import write_text

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MANIFEST = "manifest.txt"


@njit(cache=True)
def _fnv1a(data, h):
    for b in data:
        h ^= np.uint64(b)
        h *= np.uint64(FNV_PRIME)
    return h


class Hasher:
    """Incremental 64-bit FNV-1a."""

    def __init__(self):
        self.value = np.uint64(FNV_OFFSET)

    def update(self, data) -> "Hasher":
        if isinstance(data, str):
            data = data.encode()
        buf = np.frombuffer(bytes(data), dtype=np.uint8)
        if buf.size:
            self.value = np.uint64(_fnv1a(buf, self.value))
        return self

    def update_file(self, path) -> "Hasher":
        path = Path(path)
        # names are hashed too, so a renumbered sequence is a different input
        self.update(path.name).update(b"\0")
        self.update(path.read_bytes())
        return self

    def hexdigest(self) -> str:
        return f"{int(self.value):016x}"


def fnv1a64(data) -> str:
    return Hasher().update(data).hexdigest()


def hash_files(paths) -> str:
    h = Hasher()
    for p in paths:
        h.update_file(p)
    return h.hexdigest()


def stage_outputs(directory) -> list[Path]:
    """Cached artifacts of a stage: everything except the manifest and temp files."""
    directory = Path(directory)
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.is_file() and p.name != MANIFEST and not p.name.startswith("."))


@dataclass(frozen=True)
class StageManifest:
    stage: str
    input_hash: str
    config_hash: str
    frames: int
    complete: bool = False
    output_hash: str = ""

    def to_text(self) -> str:
        return (
            f"stage={self.stage}\ninput_hash={self.input_hash}\nconfig_hash={self.config_hash}\n"
            f"frames={self.frames}\ncomplete={int(self.complete)}\noutput_hash={self.output_hash}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "StageManifest":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        return cls(
            kv["stage"], kv["input_hash"], kv["config_hash"], int(kv["frames"]),
            kv.get("complete") == "1", kv.get("output_hash", ""),
        )

    @classmethod
    def load(cls, directory) -> "StageManifest | None":
        path = Path(directory) / MANIFEST
        try:
            return cls.from_text(path.read_text())
        except (OSError, KeyError, ValueError):
            return None

    def save(self, directory) -> None:
        write_text(Path(directory) / MANIFEST, self.to_text())

    def reusable(self, input_hash: str, config_hash: str, directory) -> bool:
        """True when this manifest vouches for the current contents of ``directory``."""
        return (
            self.complete
            and self.input_hash == input_hash
            and self.config_hash == config_hash
            and self.output_hash == hash_files(stage_outputs(directory))
        )
