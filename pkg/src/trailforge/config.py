"""Pipeline configuration.

The file format is one ``section.key = value`` per line; ``#`` starts a
comment.  Command-line ``--set`` overrides win over the file, which wins
over the defaults.  Relative paths are taken relative to the config file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .background import ALIGNMENTS, WindowSpec
from .deshake import DeshakeConfig
from .exceptions import ConfigError
from .ghosts import GhostThresholds
from .imaging import Rect
from .segmentation import SegmentationConfig
from .trails import COMBINE, CURVES, STYLES, FadeProfile, RenderConfig

STAGES = ("deshake", "background", "segment", "ghosts", "render")

DEFAULTS: dict[str, object] = {
    "run.input_dir": "",
    "run.work_dir": "",
    "run.stages": STAGES,
    "run.threads": "auto",
    "run.frame_rate": 25.0,
    "deshake.max_offset": 8,
    "deshake.block_size": 32,
    "deshake.contrast_threshold": 4.0,
    "deshake.subregion": None,
    "background.width": 51,
    "background.alignment": "centered",
    "background.tol": 0.05,
    "background.max_iter": 100,
    "segment.color_threshold": 18.0,
    "segment.chroma_weight": 2.0,
    "segment.disk_schedule": ((2, 0.5), (3, 0.5), (5, 0.5)),
    "segment.min_area_fraction": 1e-4,
    "segment.min_thickness": 2,
    "segment.min_aspect": 25.0,
    "segment.near_hole_max_iters": 4,
    "ghosts.proximity_factor": 4.0,
    "ghosts.area_tol": 0.5,
    "ghosts.comp_tol": 0.25,
    "ghosts.color_tol": 30.0,
    "ghosts.spread_threshold": 30.0,
    "ghosts.dilation_radius": 3,
    "render.pre_frames": 0,
    "render.post_frames": 10,
    "render.curve": "linear",
    "render.background_style": "normal",
    "render.combine": "heaviest",
}


def _parse_stages(text: str) -> tuple[str, ...]:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    unknown = [s for s in names if s not in STAGES]
    if unknown:
        raise ValueError(f"unknown stage(s) {', '.join(unknown)}; choose from {', '.join(STAGES)}")
    return tuple(s for s in STAGES if s in names)


def _parse_threads(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    return int(text)


def _parse_subregion(text: str):
    if text.strip().lower() in ("", "none"):
        return None
    parts = [int(p) for p in text.replace(" ", "").split(",")]
    if len(parts) != 4:
        raise ValueError("expected x,y,width,height")
    return tuple(parts)


def _parse_schedule(text: str):
    # "2:0.5, 3:0.5, 5:0.5"
    out = []
    for item in text.split(","):
        r, f = item.strip().split(":")
        out.append((int(r), float(f)))
    return tuple(out)


_PARSERS = {
    "run.stages": _parse_stages,
    "run.threads": _parse_threads,
    "deshake.subregion": _parse_subregion,
    "segment.disk_schedule": _parse_schedule,
}


def parse_value(key: str, text: str):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown setting {key!r}")
    try:
        if key in _PARSERS:
            return _PARSERS[key](text)
        default = DEFAULTS[key]
        if isinstance(default, bool):
            return text.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}: {exc}") from exc


def format_value(value) -> str:
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        return ",".join(f"{r}:{f!r}" for r, f in value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


def parse_lines(lines, source: str = "<config>") -> dict[str, str]:
    raw = {}
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{n}: unknown setting {key!r}")
        raw[key] = value
    return raw


@dataclass
class PipelineConfig:
    """Every tunable of a run, as a flat ``section.key`` mapping."""

    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides=()) -> "PipelineConfig":
        """Defaults, then the file at ``path``, then ``key=value`` overrides."""
        cfg = cls()
        if path is not None:
            path = Path(path)
            try:
                text = path.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            cfg.base_dir = path.resolve().parent
            for key, value in parse_lines(text.splitlines(), str(path)).items():
                cfg.values[key] = parse_value(key, value)
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = (s.strip() for s in item.split("=", 1))
            cfg.values[key] = parse_value(key, value)
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown setting {key!r}")
        self.values[key] = value

    def path(self, key: str) -> Path | None:
        text = self.values[key]
        if not text:
            return None
        p = Path(text)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def stages(self) -> tuple[str, ...]:
        return self.values["run.stages"]

    @property
    def threads(self):
        t = self.values["run.threads"]
        return None if t == "auto" else t

    def section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def canonical(self, section: str) -> str:
        """Stable text of one section, for hashing."""
        return "".join(f"{section}.{k}={format_value(v)}\n" for k, v in sorted(self.section(section).items()))

    def deshake(self) -> DeshakeConfig:
        s = self.section("deshake")
        sub = Rect(*s["subregion"]) if s["subregion"] else None
        return DeshakeConfig(s["max_offset"], s["block_size"], s["contrast_threshold"], sub)

    def window(self) -> WindowSpec:
        s = self.section("background")
        return WindowSpec(s["width"], s["alignment"])

    def segmentation(self) -> SegmentationConfig:
        return SegmentationConfig(**self.section("segment"))

    def render(self) -> RenderConfig:
        s = self.section("render")
        profile = FadeProfile(s["pre_frames"], s["post_frames"], s["curve"])
        return RenderConfig(profile, s["background_style"], s["combine"])

    def ghosts(self) -> GhostThresholds:
        return GhostThresholds(**self.section("ghosts"))

    def validate(self, paths: bool = False) -> list[str]:
        """Human-readable problems; empty means the settings are consistent.

        ``paths=True`` also requires the input and work directories to be set,
        which a run needs but the defaults alone do not provide.
        """
        v = self.values
        out = []
        if paths and not v["run.input_dir"]:
            out.append("run.input_dir is not set")
        if paths and not v["run.work_dir"]:
            out.append("run.work_dir is not set")
        stages = set(self.stages)
        if not stages:
            out.append("run.stages is empty")
        if "segment" in stages and "background" not in stages:
            out.append("stage segment requires background")
        if "render" in stages and not {"background", "segment"} <= stages:
            out.append("stage render requires background and segment")
        if "ghosts" in stages and "segment" not in stages:
            out.append("stage ghosts requires segment")
        t = v["run.threads"]
        if t != "auto" and t < 1:
            out.append("run.threads must be >= 1 or 'auto'")
        if v["run.frame_rate"] <= 0:
            out.append("run.frame_rate must be > 0")

        try:
            out.extend(self.deshake().problems())
        except ValueError as exc:
            out.append(f"deshake.subregion: {exc}")
        if v["background.width"] < 1:
            out.append("background.width must be >= 1")
        if v["background.alignment"] not in ALIGNMENTS:
            out.append(f"background.alignment must be one of {', '.join(ALIGNMENTS)}")
        if v["background.tol"] <= 0 or v["background.max_iter"] < 1:
            out.append("background.tol must be > 0 and background.max_iter >= 1")
        out.extend(self.segmentation().problems())
        if v["render.pre_frames"] < 0 or v["render.post_frames"] < 0:
            out.append("render.pre_frames and render.post_frames must be >= 0")
        elif v["render.pre_frames"] + v["render.post_frames"] < 1:
            out.append("render.pre_frames + render.post_frames must be >= 1")
        if v["render.curve"] not in CURVES:
            out.append(f"render.curve must be one of {', '.join(CURVES)}")
        if v["render.background_style"] not in STYLES:
            out.append(f"render.background_style must be one of {', '.join(STYLES)}")
        if v["render.combine"] not in COMBINE:
            out.append(f"render.combine must be one of {', '.join(COMBINE)}")
        g = self.section("ghosts")
        if g["proximity_factor"] <= 0 or g["area_tol"] < 0 or g["comp_tol"] < 0:
            out.append("ghosts.proximity_factor must be > 0 and the tolerances >= 0")
        if g["dilation_radius"] < 1:
            out.append("ghosts.dilation_radius must be >= 1")
        return out

    def check(self) -> "PipelineConfig":
        problems = self.validate(paths=True)
        if problems:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
        return self
