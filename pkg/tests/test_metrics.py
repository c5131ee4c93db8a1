import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvrseg.metrics import (
    AggregateReport,
    CaseMetrics,
    aggregate,
    boundary_mask,
    dice,
    hd95,
    iou,
    to_metric_grid,
    volumetric_metrics,
)


def brute_force_boundary(mask):
    """Independent boundary extraction: face-neighbour scan with explicit loops."""
    mask = np.asarray(mask).astype(bool)
    out = np.zeros_like(mask)
    offsets = []
    for axis in range(mask.ndim):
        for delta in (-1, 1):
            off = [0] * mask.ndim
            off[axis] = delta
            offsets.append(tuple(off))
    for idx in np.ndindex(mask.shape):
        if not mask[idx]:
            continue
        for off in offsets:
            nb = tuple(i + d for i, d in zip(idx, off))
            if any(i < 0 or i >= s for i, s in zip(nb, mask.shape)) or not mask[nb]:
                out[idx] = True
                break
    return out


def brute_force_hd95(pred, gt):
    """All-pairs pooled 95th percentile, the slow reference."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if not pred.any() and not gt.any():
        return 0.0
    if pred.any() != gt.any():
        return math.inf
    bp = np.argwhere(brute_force_boundary(pred)).astype(np.float64)
    bg = np.argwhere(brute_force_boundary(gt)).astype(np.float64)
    d2 = ((bp[:, None, :] - bg[None, :, :]) ** 2).sum(axis=2)
    pooled = np.concatenate([np.sqrt(d2.min(axis=1)), np.sqrt(d2.min(axis=0))])
    return float(np.percentile(pooled, 95.0, method="linear"))


def random_mask(rng, shape, p=0.5):
    return (rng.random(shape) < p).astype(np.uint8)


class TestDiceIou:
    def test_identical_nonempty(self):
        m = np.array([[1, 1], [0, 1]], dtype=np.uint8)
        assert dice(m, m) == 1.0
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.array([[1, 0], [0, 0]], dtype=np.uint8)
        b = np.array([[0, 0], [0, 1]], dtype=np.uint8)
        assert dice(a, b) == 0.0
        assert iou(a, b) == 0.0

    def test_counted_example(self):
        # |A| = 4, |B| = 4, |A n B| = 2 -> dice 0.5, |A u B| = 6 -> iou 1/3
        a = np.array([[1, 1, 1, 1, 0, 0]], dtype=np.uint8)
        b = np.array([[1, 1, 0, 0, 1, 1]], dtype=np.uint8)
        assert dice(a, b) == 0.5
        assert iou(a, b) == pytest.approx(1 / 3)

    def test_both_empty_convention(self):
        z = np.zeros((3, 3), dtype=np.uint8)
        assert dice(z, z) == 1.0
        assert iou(z, z) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dice(np.zeros((2, 2), dtype=np.uint8), np.zeros((2, 3), dtype=np.uint8))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_dice_iou_identity(self, seed):
        rng = np.random.default_rng(seed)
        a = random_mask(rng, (8, 8))
        b = random_mask(rng, (8, 8))
        d = dice(a, b)
        j = iou(a, b)
        assert abs(d - 2 * j / (1 + j)) < 1e-12


class TestBoundary:
    def test_single_pixel_is_boundary(self):
        m = np.zeros((3, 3), dtype=np.uint8)
        m[1, 1] = 1
        np.testing.assert_array_equal(boundary_mask(m), m.astype(bool))

    def test_block_interior_excluded(self):
        m = np.ones((5, 5), dtype=np.uint8)
        b = boundary_mask(m)
        assert not b[1:4, 1:4].any()
        assert b[0].all() and b[-1].all() and b[:, 0].all() and b[:, -1].all()

    def test_matches_brute_force_2d_and_3d(self):
        rng = np.random.default_rng(0)
        for shape in ((7, 9), (5, 6, 4)):
            m = random_mask(rng, shape, p=0.4)
            np.testing.assert_array_equal(boundary_mask(m), brute_force_boundary(m))


class TestHd95:
    def test_identical_masks_zero(self):
        rng = np.random.default_rng(1)
        m = random_mask(rng, (10, 10))
        assert hd95(m, m) == 0.0

    def test_empty_vs_nonempty_infinite(self):
        z = np.zeros((6, 6), dtype=np.uint8)
        m = z.copy()
        m[2, 3] = 1
        assert math.isinf(hd95(z, m))
        assert math.isinf(hd95(m, z))

    def test_both_empty_zero(self):
        z = np.zeros((4, 4), dtype=np.uint8)
        assert hd95(z, z) == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            a = random_mask(rng, (32, 32), p=rng.uniform(0.2, 0.8))
            b = random_mask(rng, (32, 32), p=rng.uniform(0.2, 0.8))
            assert hd95(a, b) == brute_force_hd95(a, b)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = random_mask(rng, (16, 16))
        b = random_mask(rng, (16, 16))
        assert hd95(a, b) == hd95(b, a)

    def test_translation_invariance(self):
        rng = np.random.default_rng(4)
        a = np.zeros((20, 20), dtype=np.uint8)
        b = np.zeros((20, 20), dtype=np.uint8)
        a[4:9, 5:10] = random_mask(rng, (5, 5), p=0.6)
        b[5:10, 4:9] = random_mask(rng, (5, 5), p=0.6)
        base = hd95(a, b)
        shifted = hd95(np.roll(a, (3, 2), (0, 1)), np.roll(b, (3, 2), (0, 1)))
        assert base == pytest.approx(shifted, abs=1e-12)


class TestMetricGrid:
    def test_mask_input_already_sized(self):
        rng = np.random.default_rng(5)
        pred = random_mask(rng, (256, 256))
        gt = random_mask(rng, (256, 256))
        pred_out, gt_out = to_metric_grid(pred, gt)
        np.testing.assert_array_equal(pred_out, pred)
        np.testing.assert_array_equal(gt_out, gt)

    def test_probability_input_already_sized_thresholds(self):
        rng = np.random.default_rng(6)
        prob = rng.random((256, 256))
        gt = random_mask(rng, (256, 256))
        pred_out, _ = to_metric_grid(prob, gt)
        np.testing.assert_array_equal(pred_out, (prob > 0.5).astype(np.uint8))

    def test_constant_maps(self):
        gt = np.ones((32, 32), dtype=np.uint8)
        pred_out, gt_out = to_metric_grid(np.full((64, 64), 0.7), gt)
        assert pred_out.shape == gt_out.shape == (256, 256)
        assert (pred_out == 1).all() and (gt_out == 1).all()

    def test_fixed_instance_regression(self):
        # frozen behaviour pin for the resize-then-threshold order
        prob = np.array(
            [
                [0.1, 0.4, 0.8, 0.9],
                [0.2, 0.6, 0.7, 0.3],
                [0.0, 0.5, 0.55, 0.2],
                [0.05, 0.1, 0.45, 0.6],
            ]
        )
        gt = np.array(
            [[0, 0, 1, 1], [0, 1, 1, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=np.uint8
        )
        pred256, gt256 = to_metric_grid(prob, gt)
        assert int(pred256.sum()) == 23884
        assert int(gt256.sum()) == 24576
        assert (
            pred256[0, 128], pred256[128, 128], pred256[200, 80], pred256[32, 192]
        ) == (1, 1, 0, 1)
        assert dice(pred256, gt256) == pytest.approx(0.8267024349979365, abs=1e-12)
        assert iou(pred256, gt256) == pytest.approx(0.7045974181293749, abs=1e-12)
        assert hd95(pred256, gt256) == pytest.approx(23.343092311809873, abs=1e-9)


class TestVolumetricMetrics:
    def test_identical_volumes(self):
        rng = np.random.default_rng(7)
        vol = [random_mask(rng, (6, 6)) for _ in range(4)]
        m = volumetric_metrics(vol, vol, case_id="x")
        assert m.dice == 1.0 and m.iou == 1.0 and m.hd95 == 0.0

    def test_adjacent_voxel_example(self):
        gt = [np.zeros((3, 3), dtype=np.uint8) for _ in range(3)]
        pred = [np.zeros((3, 3), dtype=np.uint8) for _ in range(3)]
        gt[1][1, 1] = 1
        pred[1][1, 1] = 1
        pred[1][1, 2] = 1
        m = volumetric_metrics(pred, gt)
        assert m.dice == pytest.approx(2 / 3)

    def test_matches_brute_force_3d(self):
        rng = np.random.default_rng(8)
        for _ in range(6):
            a = random_mask(rng, (8, 8, 8), p=0.4)
            b = random_mask(rng, (8, 8, 8), p=0.4)
            m = volumetric_metrics(list(a), list(b))
            assert m.hd95 == brute_force_hd95(a, b)

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            volumetric_metrics([], [])
        with pytest.raises(ValueError):
            volumetric_metrics(
                [np.zeros((2, 2), dtype=np.uint8)],
                [np.zeros((2, 2), dtype=np.uint8), np.zeros((2, 2), dtype=np.uint8)],
            )


class TestAggregate:
    def test_single_case(self):
        c = CaseMetrics("a", 0.9, 0.8, 3.0)
        agg = aggregate([c])
        assert agg == AggregateReport(0.9, 0.8, 3.0, 0, 1)

    def test_infinite_separated(self):
        cases = [CaseMetrics("a", 0.9, 0.8, 2.0), CaseMetrics("b", 0.5, 0.4, math.inf)]
        agg = aggregate(cases)
        assert agg.mean_hd95_finite == 2.0
        assert agg.infinite_hd95_count == 1
        assert agg.total_cases == 2

    def test_all_infinite(self):
        agg = aggregate([CaseMetrics("a", 0.0, 0.0, math.inf)])
        assert agg.mean_hd95_finite is None

    def test_ten_case_spreadsheet(self):
        rng = np.random.default_rng(9)
        cases = []
        for i in range(10):
            hd = math.inf if i % 5 == 4 else float(rng.uniform(0, 20))
            cases.append(CaseMetrics(f"c{i}", float(rng.random()), float(rng.random()), hd))
        agg = aggregate(cases)
        assert agg.mean_dice == pytest.approx(np.mean([c.dice for c in cases]))
        assert agg.mean_iou == pytest.approx(np.mean([c.iou for c in cases]))
        finite = [c.hd95 for c in cases if math.isfinite(c.hd95)]
        assert agg.mean_hd95_finite == pytest.approx(np.mean(finite))
        assert agg.infinite_hd95_count == 2

    def test_empty_error(self):
        with pytest.raises(ValueError):
            aggregate([])
