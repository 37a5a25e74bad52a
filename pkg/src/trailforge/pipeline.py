"""Stage orchestration with content-hashed caches.

Layout under ``run.work_dir``::

    stable/   deshaken frames + offsets.tsv
    bg/       backgrounds
    fg/       1-bit masks + objects_%06d.tsv
    ghosts/   verdict TSVs (+ overlay PNGs)
    out/      rendered frames
    run.json  summary of the last run

Every stage directory carries a manifest; see ``cache.StageManifest``.
"""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import io
from ._parallel import map_ordered, resolve_workers
from .background import sliding_background
from .cache import Hasher, StageManifest, hash_files, stage_outputs
from .config import PipelineConfig
from .deshake import common_crop, measure_trace
from .exceptions import ConfigError, DeshakeError, FrameIOError, StageError, TrailforgeError
from .ghosts import draw_overlay, flag_ghosts, object_stats, objects_tsv, verdicts_tsv
from .imaging import translate_crop
from .segmentation import label_components, segment_frame
from .trails import render_frame, source_range

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_STAGE = 0, 1, 2, 3
STAGE_DIRS = {"deshake": "stable", "background": "bg", "segment": "fg", "ghosts": "ghosts", "render": "out"}


@dataclass
class StageReport:
    stage: str
    status: str  # "ran" or "cached"
    seconds: float
    frames: int
    details: dict = field(default_factory=dict)


@dataclass
class RunResult:
    exit_code: int
    error: str | None = None
    stages: list[StageReport] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"exit_code": self.exit_code, "error": self.error, "stages": [asdict(s) for s in self.stages]},
            indent=2,
        ) + "\n"


def _combine(*hashes: str) -> str:
    return Hasher().update("|".join(hashes)).hexdigest()


class Pipeline:
    """One run over one work directory."""

    def __init__(self, cfg: PipelineConfig, ghost_overlay: bool = False, encode: str | None = None):
        self.cfg = cfg
        self.ghost_overlay = ghost_overlay
        self.encode = encode
        self.n_jobs = cfg.threads
        self.reports: list[StageReport] = []
        self.outputs: dict[str, str] = {}  # stage -> output hash

    # -- helpers --------------------------------------------------------

    def _dir(self, stage: str) -> Path:
        return self.work_dir / STAGE_DIRS[stage]

    def _frame_paths(self, stage: str) -> list[Path]:
        return [self._dir(stage) / io.frame_name(i) for i in range(self.count)]

    def _stage(self, stage: str, input_hash: str, config_text: str, body) -> None:
        """Run ``body(directory)`` unless the cache vouches for its output."""
        directory = self._dir(stage)
        config_hash = Hasher().update(config_text).hexdigest()
        start = time.perf_counter()
        manifest = StageManifest.load(directory)
        if manifest and manifest.frames == self.count and manifest.reusable(input_hash, config_hash, directory):
            logger.info("%s: cache hit", stage)
            self.outputs[stage] = manifest.output_hash
            self.reports.append(StageReport(stage, "cached", time.perf_counter() - start, self.count))
            return
        directory.mkdir(parents=True, exist_ok=True)
        StageManifest(stage, input_hash, config_hash, self.count).save(directory)
        for p in stage_outputs(directory):
            p.unlink()
        logger.info("%s: running on %d frames", stage, self.count)
        try:
            details = body(directory) or {}
        except DeshakeError as exc:
            raise StageError(stage, str(exc).split(" (frame")[0], exc.frame) from exc
        except (ConfigError, FrameIOError, StageError):
            raise
        except OSError as exc:
            raise FrameIOError(f"{stage}: {exc}") from exc
        except (ValueError, ArithmeticError) as exc:
            raise StageError(stage, str(exc)) from exc
        out_hash = hash_files(stage_outputs(directory))
        StageManifest(stage, input_hash, config_hash, self.count, True, out_hash).save(directory)
        self.outputs[stage] = out_hash
        seconds = time.perf_counter() - start
        logger.info("%s: done in %.2f s", stage, seconds)
        self.reports.append(StageReport(stage, "ran", seconds, self.count, details))

    # -- stages ---------------------------------------------------------

    def _deshake(self, directory: Path) -> dict:
        dcfg = self.cfg.deshake()
        w, h = self.size
        if dcfg.subregion is not None and not dcfg.subregion.fits(w, h):
            raise ConfigError(f"deshake.subregion {dcfg.subregion} does not fit a {w}x{h} frame")
        seq = io.FrameSequence(self.inputs)
        trace = measure_trace(iter(seq), dcfg, self.n_jobs)
        try:
            crop = common_crop(trace, (w, h))
        except DeshakeError as exc:
            worst = max(range(len(trace)), key=lambda i: abs(trace[i].dx) + abs(trace[i].dy))
            raise DeshakeError(str(exc), frame=worst) from exc

        def write(i):
            io.write_frame(directory / io.frame_name(i), translate_crop(seq[i], trace[i], crop))

        map_ordered(write, range(self.count), self.n_jobs)
        io.write_text(directory / "offsets.tsv", trace.to_tsv())
        return {
            "max_abs_dx": max(abs(o.dx) for o in trace),
            "max_abs_dy": max(abs(o.dy) for o in trace),
            "crop": [crop.x0, crop.y0, crop.width, crop.height],
        }

    def _background(self, directory: Path) -> dict:
        seq = io.FrameSequence(self.sources)
        v = self.cfg.section("background")
        stream = sliding_background(seq, self.cfg.window(), v["tol"], v["max_iter"], self.n_jobs)
        for i, bg in enumerate(stream):
            io.write_frame(directory / io.frame_name(i), bg)
        return {"decodes": seq.decode_count}

    def _segment(self, directory: Path) -> dict:
        scfg = self.cfg.segmentation()
        bgs = self._frame_paths("background")

        def one(i):
            frame = io.read_frame(self.sources[i])
            mask = segment_frame(frame, io.read_frame(bgs[i]), scfg)
            io.write_mask(directory / io.frame_name(i), mask)
            stats = object_stats(label_components(mask), frame, surroundings=False)
            io.write_text(directory / f"objects_{i:06d}.tsv", objects_tsv(stats))
            return len(stats)

        counts = map_ordered(one, range(self.count), self.n_jobs)
        return {"objects": int(sum(counts))}

    def _ghosts(self, directory: Path) -> dict:
        th = self.cfg.ghosts()
        masks = self._frame_paths("segment")

        def one(i):
            frame = io.read_frame(self.sources[i])
            stats = object_stats(label_components(io.read_mask(masks[i])), frame, th)
            verdicts = flag_ghosts(stats, th)
            io.write_text(directory / f"frame_{i:06d}.tsv", verdicts_tsv(verdicts))
            if self.ghost_overlay:
                io.write_frame(directory / f"overlay_{i:06d}.png", draw_overlay(frame, stats, verdicts))
            return sum(v.suspected for v in verdicts)

        return {"suspected": int(sum(map_ordered(one, range(self.count), self.n_jobs)))}

    def _render(self, directory: Path) -> dict:
        rcfg = self.cfg.render()
        bgs = self._frame_paths("background")
        masks = self._frame_paths("segment")
        frames, backgrounds, fgs = {}, {}, {}
        batch = max(8, 2 * resolve_workers(self.n_jobs))
        for start in range(0, self.count, batch):
            targets = range(start, min(self.count, start + batch))
            needed = set()
            for n in targets:
                needed.update(source_range(n, self.count, rcfg.profile))
            # keep only what this batch reads; everything else is re-read if needed
            for cache in (frames, fgs):
                for k in [k for k in cache if k not in needed]:
                    del cache[k]
            backgrounds.clear()
            for m in sorted(needed - frames.keys()):
                frames[m] = io.read_frame(self.sources[m])
                fgs[m] = io.read_mask(masks[m])
            for n in targets:
                backgrounds[n] = io.read_frame(bgs[n])

            def one(n):
                out = render_frame(n, frames, backgrounds, fgs, rcfg, count=self.count)
                io.write_frame(directory / io.frame_name(n), out)

            map_ordered(one, targets, self.n_jobs)
        return {}

    # -- driver ---------------------------------------------------------

    def _encode(self) -> None:
        pattern = str(self._dir("render") / "frame_%06d.png")
        fps = self.cfg["run.frame_rate"]
        command = self.encode.replace("{pattern}", shlex.quote(pattern)).replace("{fps}", f"{fps:g}")
        logger.info("encode: %s", command)
        try:
            done = subprocess.run(shlex.split(command), cwd=self.work_dir)
        except OSError as exc:
            raise StageError("encode", str(exc)) from exc
        if done.returncode != 0:
            raise StageError("encode", f"encoder exited with status {done.returncode}")

    def execute(self) -> None:
        """Run the configured stages; raises on failure."""
        self.cfg.check()
        input_dir = self.cfg.path("run.input_dir")
        self.work_dir = self.cfg.path("run.work_dir")
        seq = io.FrameSequence.from_directory(input_dir)
        self.size = seq.check()
        self.inputs = seq.paths
        self.count = len(seq)
        self.work_dir.mkdir(parents=True, exist_ok=True)
        if self.encode and "render" not in self.cfg.stages:
            raise ConfigError("--encode needs the render stage")

        stages = self.cfg.stages
        canon = self.cfg.canonical
        src_hash = hash_files(self.inputs)
        if "deshake" in stages:
            self._stage("deshake", src_hash, canon("deshake"), self._deshake)
            self.sources = self._frame_paths("deshake")
            src_hash = _combine(self.outputs["deshake"])
        else:
            self.sources = self.inputs
        if "background" in stages:
            self._stage("background", src_hash, canon("background"), self._background)
        if "segment" in stages:
            self._stage("segment", _combine(src_hash, self.outputs["background"]), canon("segment"), self._segment)
        if "ghosts" in stages:
            ghost_cfg = canon("ghosts") + f"overlay={int(self.ghost_overlay)}\n"
            self._stage("ghosts", _combine(src_hash, self.outputs["segment"]), ghost_cfg, self._ghosts)
        if "render" in stages:
            render_in = _combine(src_hash, self.outputs["background"], self.outputs["segment"])
            self._stage("render", render_in, canon("render"), self._render)
            if self.encode:
                self._encode()


def run(cfg: PipelineConfig, ghost_overlay: bool = False, encode: str | None = None) -> RunResult:
    """Run the pipeline and write ``run.json``; never raises for pipeline errors."""
    pipe = Pipeline(cfg, ghost_overlay, encode)
    try:
        pipe.execute()
        result = RunResult(EXIT_OK)
    except ConfigError as exc:
        result = RunResult(EXIT_CONFIG, str(exc))
    except FrameIOError as exc:
        result = RunResult(EXIT_IO, str(exc))
    except (StageError, TrailforgeError) as exc:
        result = RunResult(EXIT_STAGE, str(exc))
    result.stages = pipe.reports
    if result.error:
        logger.error("%s", result.error)
    work_dir = getattr(pipe, "work_dir", None)
    if work_dir is not None and work_dir.is_dir():
        io.write_text(work_dir / "run.json", result.to_json())
    return result
