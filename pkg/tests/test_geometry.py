import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpad.errors import InvalidBox, InvalidThreshold, MalformedRLE, ShapeMismatch
from dpad.geometry import (
    BBox,
    KeyPoint,
    Localization,
    MaskRLE,
    bbox_iou,
    geo_reward,
    iou_reward,
    l1_bbox_reward,
    l1_points_reward,
    mask_iou,
    rle_decode,
    rle_encode,
)

from conftest import bitmap_iou, random_bitmap


def raster_box_iou(a: BBox, b: BBox, grid: int = 256) -> float:
    """Oracle: count unit cells covered by each integer-coordinate box."""
    ys, xs = np.mgrid[0:grid, 0:grid]

    def cover(box):
        return (xs >= box.x1) & (xs + 1 <= box.x2) & (ys >= box.y1) & (ys + 1 <= box.y2)

    ca, cb = cover(a), cover(b)
    union = np.logical_or(ca, cb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(ca, cb).sum()) / float(union)


def random_int_box(rng, grid: int = 256) -> BBox:
    x1, x2 = sorted(rng.integers(0, grid + 1, size=2).tolist())
    y1, y2 = sorted(rng.integers(0, grid + 1, size=2).tolist())
    if x2 == x1:
        x2 += 1
    if y2 == y1:
        y2 += 1
    return BBox(float(x1), float(y1), float(min(x2, grid)), float(min(y2, grid)))


class TestBBoxIoU:
    def test_identical(self):
        b = BBox(3, 4, 10, 12)
        assert bbox_iou(b, b) == 1.0

    def test_disjoint(self):
        assert bbox_iou(BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)) == 0.0

    def test_quarter_overlap(self):
        # 5x5 intersection over 100 + 100 - 25 union
        assert bbox_iou(BBox(0, 0, 10, 10), BBox(5, 5, 15, 15)) == pytest.approx(25 / 175, abs=1e-12)

    def test_matches_raster_oracle(self):
        rng = np.random.default_rng(1234)
        for _ in range(1000):
            a, b = random_int_box(rng), random_int_box(rng)
            assert bbox_iou(a, b) == pytest.approx(raster_box_iou(a, b), abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(77)
        for _ in range(10_000):
            x1, y1 = rng.uniform(0, 200, size=2)
            a = BBox(x1, y1, x1 + rng.uniform(0.1, 100), y1 + rng.uniform(0.1, 100))
            x1, y1 = rng.uniform(0, 200, size=2)
            b = BBox(x1, y1, x1 + rng.uniform(0.1, 100), y1 + rng.uniform(0.1, 100))
            assert bbox_iou(a, b) == bbox_iou(b, a)

    def test_invalid_box_rejected(self):
        with pytest.raises(InvalidBox):
            BBox(10, 0, 5, 5)
        with pytest.raises(InvalidBox):
            BBox(0, 0, float("nan"), 5)


class TestBinaryGeoRewards:
    def test_iou_reward_strict_threshold(self):
        # IoU exactly 0.5: two 10x10 boxes can't do it; use 1D overlap 2/3 boxes
        a = BBox(0, 0, 2, 1)
        b = BBox(1, 0, 3, 1)  # inter 1, union 3
        assert bbox_iou(a, b) == pytest.approx(1 / 3)
        assert iou_reward(a, b) == 0.0
        # exact 0.5: [0,0,1,2] vs [0,0,1,3]: inter 2, union 3 -> no; use nested
        a = BBox(0, 0, 1, 1)
        b = BBox(0, 0, 1, 2)  # inter 1, union 2 = 0.5 exactly
        assert bbox_iou(a, b) == 0.5
        assert iou_reward(a, b) == 0.0  # strictly-exceeds rule
        b2 = BBox(0, 0, 1, 1.9)
        assert bbox_iou(a, b2) > 0.5
        assert iou_reward(a, b2) == 1.0

    def test_identical_boxes(self):
        b = BBox(5, 5, 50, 80)
        assert iou_reward(b, b) == 1.0

    def test_l1_bbox_reward(self):
        gt = BBox(10, 10, 50, 50)
        assert l1_bbox_reward(gt, gt, tau_box=10) == 1.0
        shifted8 = BBox(18, 18, 58, 58)
        assert l1_bbox_reward(shifted8, gt, tau_box=10) == 1.0  # mean 8 < 10
        shifted12 = BBox(22, 22, 62, 62)
        assert l1_bbox_reward(shifted12, gt, tau_box=10) == 0.0  # mean 12
        with pytest.raises(InvalidThreshold):
            l1_bbox_reward(gt, gt, tau_box=0)

    def test_l1_points_reward(self):
        gt = (KeyPoint(10, 10), KeyPoint(20, 20))
        assert l1_points_reward(gt, gt, tau_pt=10) == 1.0
        off5 = (KeyPoint(15, 15), KeyPoint(25, 25))
        assert l1_points_reward(off5, gt, tau_pt=10) == 1.0
        off15 = (KeyPoint(25, 25), KeyPoint(35, 35))
        assert l1_points_reward(off15, gt, tau_pt=10) == 0.0

    def test_geo_reward_sums_subrewards(self):
        gt = Localization(BBox(10, 10, 50, 50), KeyPoint(30, 30), KeyPoint(40, 40))
        assert geo_reward(gt, gt).score == 3.0
        far = Localization(BBox(200, 200, 240, 240), KeyPoint(5, 5), KeyPoint(6, 6))
        assert geo_reward(far, gt).score == 0.0

    def test_geo_reward_iou_pass_l1_fail(self):
        # tall overlap: IoU 0.6 but coordinates shifted well past tau
        gt = Localization(BBox(0, 0, 100, 500), KeyPoint(50, 250), KeyPoint(75, 375))
        pred_box = BBox(0, 120, 100, 620)  # inter 380*100, union 2*500*100-38000
        assert bbox_iou(pred_box, gt.bbox) == pytest.approx(38000 / 62000)
        pred = Localization(pred_box, KeyPoint(50, 370), KeyPoint(75, 495))
        breakdown = geo_reward(pred, gt, tau_box=10, tau_pt=10)
        assert breakdown.iou_reward == 1.0
        assert breakdown.l1_box_reward == 0.0
        assert breakdown.l1_points_reward == 0.0
        assert breakdown.score == 1.0

    def test_translation_invariance(self):
        rng = np.random.default_rng(5)
        gt = Localization(BBox(10, 10, 60, 70), KeyPoint(30, 30), KeyPoint(50, 60))
        pred = Localization(BBox(14, 12, 66, 75), KeyPoint(33, 29), KeyPoint(48, 66))
        base = geo_reward(pred, gt)
        for _ in range(50):
            dx, dy = rng.uniform(-300, 300, size=2)

            def shift(loc):
                return Localization(
                    BBox(loc.bbox.x1 + dx, loc.bbox.y1 + dy, loc.bbox.x2 + dx, loc.bbox.y2 + dy),
                    KeyPoint(loc.p1.x + dx, loc.p1.y + dy),
                    KeyPoint(loc.p2.x + dx, loc.p2.y + dy),
                )

            moved = geo_reward(shift(pred), shift(gt))
            assert moved.iou_reward == base.iou_reward
            assert moved.l1_box_reward == base.l1_box_reward
            assert moved.l1_points_reward == base.l1_points_reward


class TestRLE:
    def test_all_zeros(self):
        m = rle_encode(np.zeros((2, 2), dtype=bool))
        assert m.counts == [4]

    def test_all_ones(self):
        m = rle_encode(np.ones((2, 2), dtype=bool))
        assert m.counts == [0, 4]

    def test_single_pixel_column_major(self):
        # (row 0, col 1) is the third pixel in column-major order
        bitmap = np.zeros((2, 2), dtype=bool)
        bitmap[0, 1] = True
        assert rle_encode(bitmap).counts == [2, 1, 1]

    def test_sum_mismatch_rejected(self):
        with pytest.raises(MalformedRLE):
            MaskRLE(2, 2, [3])
        with pytest.raises(MalformedRLE):
            MaskRLE(2, 2, [2, -1, 3])
        with pytest.raises(MalformedRLE):
            MaskRLE(2, 2, [0, 0, 4])

    @given(st.data())
    @settings(max_examples=200, deadline=None)
    def test_roundtrip(self, data):
        h = data.draw(st.integers(1, 20))
        w = data.draw(st.integers(1, 20))
        bits = data.draw(st.lists(st.booleans(), min_size=h * w, max_size=h * w))
        bitmap = np.array(bits, dtype=bool).reshape(h, w)
        mask = rle_encode(bitmap)
        assert np.array_equal(rle_decode(mask), bitmap)
        assert rle_encode(rle_decode(mask)) == mask


class TestMaskIoU:
    def test_identical_nonempty(self):
        bitmap = np.zeros((10, 10), dtype=bool)
        bitmap[2:5, 3:9] = True
        m = rle_encode(bitmap)
        assert mask_iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((10, 10), dtype=bool)
        b = np.zeros((10, 10), dtype=bool)
        a[0:3] = True
        b[5:8] = True
        assert mask_iou(rle_encode(a), rle_encode(b)) == 0.0

    def test_row_bands(self):
        a = np.zeros((10, 10), dtype=bool)
        b = np.zeros((10, 10), dtype=bool)
        a[0:5] = True  # rows 0-4
        b[3:8] = True  # rows 3-7
        assert mask_iou(rle_encode(a), rle_encode(b)) == pytest.approx(20 / 80)

    def test_empty_conventions(self):
        empty = rle_encode(np.zeros((4, 4), dtype=bool))
        full = rle_encode(np.ones((4, 4), dtype=bool))
        assert mask_iou(empty, empty) == 1.0
        assert mask_iou(empty, full) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            mask_iou(rle_encode(np.zeros((2, 2), dtype=bool)), rle_encode(np.zeros((3, 2), dtype=bool)))

    def test_matches_bitmap_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            a = random_bitmap(rng)
            b = rng.random(a.shape) < rng.uniform(0, 1)
            ra, rb = rle_encode(a), rle_encode(b)
            assert mask_iou(ra, rb) == bitmap_iou(a, b)
