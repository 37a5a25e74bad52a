import json
import sys

import numpy as np
import pytest

from scenes import SPRITE_COLOR, pipeline_scene, random_walk
from trailforge import io
from trailforge.cli import main
from trailforge.config import PipelineConfig
from trailforge.pipeline import STAGE_DIRS, run

N = 8


def make_scene(root, n=N):
    return pipeline_scene(root, n)


@pytest.fixture
def scene(tmp_path):
    return make_scene(tmp_path)


def snapshot(work):
    """{relative path: (bytes, mtime_ns)} for every stage artifact."""
    out = {}
    for d in STAGE_DIRS.values():
        for p in sorted((work / d).iterdir()):
            out[f"{d}/{p.name}"] = (p.read_bytes(), p.stat().st_mtime_ns)
    return out


def report(work):
    data = json.loads((work / "run.json").read_text())
    return {s["stage"]: s for s in data["stages"]}, data


class TestFullRun:
    def test_artifacts(self, scene):
        assert main(["run", "--config", str(scene), "-q"]) == 0
        work = scene.parent / "work"
        for stage, d in STAGE_DIRS.items():
            assert (work / d / "manifest.txt").is_file(), stage
        for d in ("stable", "bg", "fg", "out"):
            assert len(list((work / d).glob("frame_*.png"))) == N
        assert len(list((work / "fg").glob("objects_*.tsv"))) == N
        assert len(list((work / "ghosts").glob("frame_*.tsv"))) == N
        assert not list((work / "ghosts").glob("overlay_*"))
        stages, data = report(work)
        assert data["exit_code"] == 0 and data["error"] is None
        assert all(s["status"] == "ran" and s["frames"] == N for s in stages.values())
        assert stages["deshake"]["details"]["max_abs_dx"] <= 4
        assert stages["background"]["details"]["decodes"] == N

    def test_offsets_match_walk(self, scene):
        main(["run", "--config", str(scene), "-q", "--stages", "deshake"])
        text = (scene.parent / "work" / "stable" / "offsets.tsv").read_text().splitlines()
        walk = random_walk(N, 1, seed=3)
        got = [tuple(int(v) for v in row.split("\t")[3:5]) for row in text[1:]]
        assert got == [(-dx, -dy) for dx, dy in walk]

    def test_sprite_is_the_only_foreground(self, scene):
        main(["run", "--config", str(scene), "-q"])
        work = scene.parent / "work"
        for i in range(N):
            m = io.read_mask(work / "fg" / io.frame_name(i))
            rows = (work / "fg" / f"objects_{i:06d}.tsv").read_text().splitlines()
            assert len(rows) == 2
            assert m.sum() == int(rows[1].split("\t")[1])
            assert rows[1].split("\t")[-3:] == [str(c) for c in SPRITE_COLOR]

    def test_rerun_is_full_cache_hit(self, scene):
        main(["run", "--config", str(scene), "-q"])
        work = scene.parent / "work"
        before = snapshot(work)
        assert main(["run", "--config", str(scene), "-q"]) == 0
        assert snapshot(work) == before
        stages, _ = report(work)
        assert all(s["status"] == "cached" for s in stages.values())

    def test_render_only_change(self, scene):
        main(["run", "--config", str(scene), "-q"])
        work = scene.parent / "work"
        before = snapshot(work)
        assert main(["run", "--config", str(scene), "-q", "--set", "render.curve=cubic"]) == 0
        after = snapshot(work)
        for key in before:
            if not key.startswith("out/"):
                assert after[key] == before[key], key
        assert any(after[k][0] != before[k][0] for k in before if k.startswith("out/frame_"))
        stages, _ = report(work)
        assert [s for s, r in stages.items() if r["status"] == "ran"] == ["render"]

    def test_deleted_stage_regenerates_identically(self, scene):
        main(["run", "--config", str(scene), "-q"])
        work = scene.parent / "work"
        before = {k: v[0] for k, v in snapshot(work).items()}
        for p in (work / "bg").iterdir():
            p.unlink()
        (work / "bg").rmdir()
        assert main(["run", "--config", str(scene), "-q"]) == 0
        assert {k: v[0] for k, v in snapshot(work).items()} == before
        stages, _ = report(work)
        assert stages["background"]["status"] == "ran"
        # same bytes downstream, so the later stages stay cached
        assert stages["segment"]["status"] == "cached"

    def test_incomplete_manifest_reruns(self, scene):
        main(["run", "--config", str(scene), "-q"])
        work = scene.parent / "work"
        man = work / "fg" / "manifest.txt"
        man.write_text(man.read_text().replace("complete=1", "complete=0"))
        main(["run", "--config", str(scene), "-q"])
        stages, _ = report(work)
        assert stages["segment"]["status"] == "ran"
        assert stages["background"]["status"] == "cached"

    def test_tampered_output_reruns(self, scene):
        main(["run", "--config", str(scene), "-q"])
        work = scene.parent / "work"
        good = (work / "out" / io.frame_name(2)).read_bytes()
        io.write_frame(work / "out" / io.frame_name(2), np.zeros((4, 4, 3), np.uint8))
        main(["run", "--config", str(scene), "-q"])
        assert (work / "out" / io.frame_name(2)).read_bytes() == good

    def test_thread_counts_identical(self, tmp_path):
        outputs = []
        for t in (1, 3):
            cfg = make_scene(tmp_path / f"t{t}")
            assert main(["run", "--config", str(cfg), "-q", "--threads", str(t)]) == 0
            outputs.append({k: v[0] for k, v in snapshot(cfg.parent / "work").items()})
        assert outputs[0] == outputs[1]

    def test_ghost_overlay(self, scene):
        assert main(["run", "--config", str(scene), "-q", "--ghost-overlay"]) == 0
        assert len(list((scene.parent / "work" / "ghosts").glob("overlay_*.png"))) == N

    def test_without_deshake(self, scene):
        assert main(["run", "--config", str(scene), "-q", "--stages", "background,segment,render"]) == 0
        work = scene.parent / "work"
        assert not (work / "stable").exists()
        assert io.read_frame(work / "out" / io.frame_name(0)).shape == (80, 96, 3)


class TestFailures:
    def test_empty_input(self, tmp_path):
        (tmp_path / "in").mkdir()
        cfg = tmp_path / "run.cfg"
        cfg.write_text("run.input_dir = in\nrun.work_dir = work\n")
        assert main(["run", "--config", str(cfg), "-q"]) == 2
        assert not (tmp_path / "work").exists()

    def test_unreadable_frames_listed(self, scene, caplog):
        (scene.parent / "in" / io.frame_name(4)).write_bytes(b"not a png")
        (scene.parent / "in" / io.frame_name(6)).write_bytes(b"")
        assert main(["run", "--config", str(scene), "-q"]) == 2
        assert io.frame_name(4) in caplog.text and io.frame_name(6) in caplog.text

    def test_size_mismatch(self, scene, caplog):
        io.write_frame(scene.parent / "in" / io.frame_name(7), np.zeros((80, 95, 3), np.uint8))
        assert main(["run", "--config", str(scene), "-q"]) == 2
        assert "frame 7" in caplog.text

    def test_deshake_failure_names_frame(self, scene):
        io.write_frame(scene.parent / "in" / io.frame_name(5), np.full((80, 96, 3), 60, np.uint8))
        assert main(["run", "--config", str(scene), "-q"]) == 3
        _, data = report(scene.parent / "work")
        assert "deshake at frame 6" in data["error"]

    def test_bad_config(self, scene):
        assert main(["run", "--config", str(scene), "-q", "--set", "background.width=0"]) == 1
        assert main(["run", "--config", str(scene), "-q", "--set", "bogus.key=1"]) == 1
        assert main(["run", "--config", str(scene.parent / "none.cfg"), "-q"]) == 1

    def test_subregion_outside_frame(self, scene):
        assert main(["run", "--config", str(scene), "-q", "--set", "deshake.subregion=0,0,500,500"]) == 1


class TestValidate:
    def test_ok(self, scene, capsys):
        assert main(["validate", "--config", str(scene)]) == 0
        assert capsys.readouterr().out.strip() == "ok"

    def test_problems(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("deshake.block_size = 12\nbackground.width = 0\n")
        assert main(["validate", "--config", str(cfg)]) == 1
        out = capsys.readouterr().out
        assert "run.input_dir is not set" in out
        assert "3x max_offset" in out
        assert "background.width must be >= 1" in out

    def test_does_not_touch_images(self, scene):
        (scene.parent / "in" / io.frame_name(0)).write_bytes(b"broken")
        assert main(["validate", "--config", str(scene)]) == 0


class TestEncode:
    def test_placeholders(self, scene):
        script = "import sys; open('encoded.txt', 'w').write(' '.join(sys.argv[1:]))"
        cmd = f'{sys.executable} -c "{script}" {{pattern}} {{fps}}'
        assert main(["run", "--config", str(scene), "-q", "--encode", cmd]) == 0
        work = scene.parent / "work"
        pattern, fps = (work / "encoded.txt").read_text().split(" ")
        assert pattern == str(work / "out" / "frame_%06d.png")
        assert fps == "25"

    def test_encoder_failure(self, scene):
        cmd = f'{sys.executable} -c "raise SystemExit(4)"'
        assert main(["run", "--config", str(scene), "-q", "--encode", cmd]) == 3

    def test_needs_render(self, scene):
        assert main(["run", "--config", str(scene), "-q", "--stages", "deshake", "--encode", "true"]) == 1


def test_run_api(scene):
    cfg = PipelineConfig.load(scene, ["run.stages=deshake,background"])
    result = run(cfg)
    assert result.exit_code == 0
    assert [s.stage for s in result.stages] == ["deshake", "background"]


def test_console_script(scene):
    import shutil
    import subprocess

    exe = shutil.which("trailforge") or pytest.skip("console script not installed")
    done = subprocess.run([exe, "validate", "--config", str(scene)], capture_output=True, text=True)
    assert done.returncode == 0 and done.stdout.strip() == "ok"
    (scene.parent / "in" / io.frame_name(3)).write_bytes(b"")
    done = subprocess.run([exe, "run", "--config", str(scene)], capture_output=True, text=True)
    assert done.returncode == 2
    assert io.frame_name(3) in done.stderr and done.stdout == ""
