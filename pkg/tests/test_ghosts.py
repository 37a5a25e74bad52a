import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenes import CAR, PAVEMENT
from trailforge.ghosts import (
    OVERLAY_COLOR,
    GhostDetector,
    GhostThresholds,
    draw_overlay,
    flag_ghosts,
    object_stats,
    objects_tsv,
    verdicts_tsv,
)
from trailforge.segmentation import label_components


def pavement(h=80, w=120, seed=0):
    rng = np.random.default_rng(seed)
    return np.clip(np.array(PAVEMENT) + rng.integers(-4, 5, (h, w, 3)), 0, 255).astype(np.uint8)


def car_and_patch(patch_color=None):
    """Frame with a red car and, beside it, a same-shaped patch of pavement.

    The mask marks both as foreground, as a segmentation would right after a
    parked car leaves.
    """
    frame = pavement()
    frame[20:36, 60:84] = CAR
    if patch_color is not None:
        frame[20:36, 20:44] = patch_color
    mask = np.zeros(frame.shape[:2], bool)
    mask[20:36, 20:44] = True
    mask[20:36, 60:84] = True
    return frame, mask


class TestObjectStats:
    def test_square_compactness(self):
        frame, mask = car_and_patch()
        stats = object_stats(label_components(mask), frame)
        assert [s.compactness for s in stats] == [1.0, 1.0]
        assert stats[0].area == 16 * 24

    def test_l_shape(self):
        mask = np.zeros((20, 20), bool)
        mask[2:10, 2:10] = True
        mask[2:6, 6:10] = False  # remove one quadrant
        stats = object_stats(label_components(mask), pavement(20, 20))
        assert stats[0].compactness == pytest.approx(0.75)

    def test_median_colors(self):
        frame, mask = car_and_patch()
        s = object_stats(label_components(mask), frame)
        assert s[1].median_color == pytest.approx(CAR, abs=0.05)
        assert s[1].surroundings_color == pytest.approx(PAVEMENT, abs=2)
        assert s[1].surroundings_spread < 10

    def test_checkerboard_too_varied(self):
        frame = np.zeros((40, 40, 3), np.uint8)
        frame[(np.indices((40, 40)).sum(axis=0) % 2) == 1] = 255
        mask = np.zeros((40, 40), bool)
        mask[15:25, 15:25] = True
        s = object_stats(label_components(mask), frame)[0]
        assert s.too_varied and s.surroundings_spread > 30

    def test_no_surroundings(self):
        s = object_stats(label_components(np.ones((6, 6), bool)), pavement(6, 6))[0]
        assert s.too_varied

    def test_other_objects_excluded(self):
        frame, mask = car_and_patch()
        # a blue object inside the car's dilation does not leak into its ring
        mask[20:36, 57] = True
        frame[20:36, 57] = (0, 0, 255)
        s = object_stats(label_components(mask), frame)
        assert len(s) == 3
        assert s[-1].surroundings_spread < 10
        # unmasked, the same blue pixels do count as surroundings
        mask[20:36, 57] = False
        s2 = object_stats(label_components(mask), frame)
        assert s2[-1].surroundings_spread > s[-1].surroundings_spread

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            object_stats(label_components(np.ones((4, 4), bool)), pavement(4, 5))


class TestFlagGhosts:
    def test_pavement_patch_flagged(self):
        frame, mask = car_and_patch()
        stats = object_stats(label_components(mask), frame)
        v = flag_ghosts(stats)
        assert [x.suspected for x in v] == [True, False]
        assert v[0].partner_label == 2 and v[0].reason

    def test_both_contrasting(self):
        frame, mask = car_and_patch(patch_color=(20, 200, 40))
        v = flag_ghosts(object_stats(label_components(mask), frame))
        assert not any(x.suspected for x in v)

    def test_lone_object(self):
        frame, mask = car_and_patch()
        mask[:, 50:] = False
        assert not flag_ghosts(object_stats(label_components(mask), frame))[0].suspected

    def test_too_far(self):
        frame = pavement(80, 400)
        frame[20:36, 360:384] = CAR
        mask = np.zeros((80, 400), bool)
        mask[20:36, 20:44] = mask[20:36, 360:384] = True
        assert not any(v.suspected for v in flag_ghosts(object_stats(label_components(mask), frame)))

    def test_size_mismatch(self):
        frame, mask = car_and_patch()
        mask[20:36, 20:44] = False
        mask[20:26, 20:28] = True  # much smaller patch
        assert not any(v.suspected for v in flag_ghosts(object_stats(label_components(mask), frame)))

    def test_too_varied_never_flagged(self):
        frame, mask = car_and_patch()
        frame[10:46, 10:54] = np.where(np.indices((36, 44)).sum(axis=0)[..., None] % 2, 255, 0)
        frame[20:36, 20:44] = 128
        stats = object_stats(label_components(mask), frame)
        assert stats[0].too_varied
        assert not flag_ghosts(stats)[0].suspected

    def test_does_not_touch_inputs(self):
        frame, mask = car_and_patch()
        lm = label_components(mask)
        before = lm.labels.copy()
        flag_ghosts(object_stats(lm, frame))
        assert np.array_equal(lm.labels, before)

    @pytest.mark.parametrize("dx,dy", [(7, 3), (-11, 20), (0, 31)])
    def test_translation_invariant(self, dx, dy):
        frame, mask = car_and_patch()
        big = pavement(200, 200, seed=1)
        bm = np.zeros((200, 200), bool)
        big[50 : 50 + 80, 40 : 40 + 120] = frame
        bm[50 : 50 + 80, 40 : 40 + 120] = mask
        moved = np.roll(big, (dy, dx), axis=(0, 1))
        mm = np.roll(bm, (dy, dx), axis=(0, 1))
        a = flag_ghosts(object_stats(label_components(bm), big))
        b = flag_ghosts(object_stats(label_components(mm), moved))
        assert [(v.suspected, v.partner_label) for v in a] == [(v.suspected, v.partner_label) for v in b]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0, 0.6), st.floats(0, 0.3))
    def test_monotone_in_tolerances(self, seed, area_tol, comp_tol):
        rng = np.random.default_rng(seed)
        frame = pavement(90, 160, seed=seed)
        mask = np.zeros((90, 160), bool)
        for k in range(5):
            y, x = 5 + 40 * (k % 2), 5 + 30 * k
            h, w = rng.integers(6, 25, 2)
            mask[y : y + h, x : x + w] = True
            if rng.random() < 0.6:
                frame[y : y + h, x : x + w] = CAR
        stats = object_stats(label_components(mask), frame)
        loose = GhostThresholds(area_tol=area_tol, comp_tol=comp_tol)
        tight_a = GhostThresholds(area_tol=area_tol / 2, comp_tol=comp_tol)
        tight_c = GhostThresholds(area_tol=area_tol, comp_tol=comp_tol / 2)
        n = sum(v.suspected for v in flag_ghosts(stats, loose))
        assert sum(v.suspected for v in flag_ghosts(stats, tight_a)) <= n
        assert sum(v.suspected for v in flag_ghosts(stats, tight_c)) <= n


class TestOutputs:
    def test_verdicts_tsv(self):
        frame, mask = car_and_patch()
        text = verdicts_tsv(flag_ghosts(object_stats(label_components(mask), frame)))
        lines = text.splitlines()
        assert lines[0] == "label\tsuspected\tpartner\treason"
        assert lines[1].startswith("1\t1\t2\t")
        assert lines[2] == "2\t0\t\t"

    def test_objects_tsv(self):
        frame, mask = car_and_patch()
        text = objects_tsv(object_stats(label_components(mask), frame, surroundings=False))
        row = text.splitlines()[2].split("\t")
        assert row == ["2", "384", "60", "20", "24", "16", "1.000000", "200", "30", "40"]

    def test_overlay(self):
        frame, mask = car_and_patch()
        stats = object_stats(label_components(mask), frame)
        out = draw_overlay(frame, stats, flag_ghosts(stats))
        assert tuple(out[20, 20]) == OVERLAY_COLOR and tuple(out[35, 43]) == OVERLAY_COLOR
        assert np.array_equal(out[22:34, 22:42], frame[22:34, 22:42])
        assert np.array_equal(out[:, 50:], frame[:, 50:])

    def test_detector(self):
        frame, mask = car_and_patch()
        out = GhostDetector().fit().predict([frame, frame], [mask, np.zeros_like(mask)])
        assert [v.suspected for v in out[0]] == [True, False]
        assert out[1] == []
        assert GhostDetector(color_tol=5).thresholds().color_tol == 5
