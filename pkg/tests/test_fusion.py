import numpy as np
import pytest

from mvrseg.fusion import FusionConfig, binary_entropy, fuse_entropy_guided, threshold


class TestBinaryEntropy:
    def test_half_is_ln2(self):
        assert binary_entropy(np.array(0.5)) == pytest.approx(0.693147, abs=1e-5)

    def test_degenerate_zero(self):
        assert binary_entropy(np.array(0.0)) == pytest.approx(0.0, abs=1e-7)

    def test_quarter_pinned(self):
        assert binary_entropy(np.array(0.25)) == pytest.approx(0.562335, abs=1e-6)

    def test_symmetric(self):
        ps = np.linspace(0.0, 1.0, 101)
        np.testing.assert_allclose(binary_entropy(ps), binary_entropy(1.0 - ps), atol=1e-7)

    def test_maximised_at_half(self):
        ps = np.linspace(0.0, 1.0, 2001)
        values = binary_entropy(ps)
        assert values.max() <= binary_entropy(np.array(0.5)) + 1e-12


class TestFusion:
    def test_confident_low_branch_wins(self):
        cfg = FusionConfig(tau=0.3)
        p_lo = np.full((4, 4), 0.99)
        p_hi = np.random.default_rng(0).random((4, 4))
        np.testing.assert_array_equal(fuse_entropy_guided(p_lo, p_hi, cfg), p_lo)

    def test_uncertain_low_branch_defers(self):
        cfg = FusionConfig(tau=0.3)
        p_lo = np.full((4, 4), 0.5)  # entropy ln 2 > 0.3
        p_hi = np.random.default_rng(1).random((4, 4))
        np.testing.assert_array_equal(fuse_entropy_guided(p_lo, p_hi, cfg), p_hi)

    def test_matches_per_pixel_brute_force(self):
        rng = np.random.default_rng(2)
        cfg = FusionConfig(tau=0.3)
        p_lo = rng.random((8, 8))
        p_hi = rng.random((8, 8))
        fused = fuse_entropy_guided(p_lo, p_hi, cfg)
        for i in range(8):
            for j in range(8):
                h = -p_lo[i, j] * np.log(p_lo[i, j] + cfg.epsilon) - (
                    1 - p_lo[i, j]
                ) * np.log(1 - p_lo[i, j] + cfg.epsilon)
                expected = p_lo[i, j] if h <= cfg.tau else p_hi[i, j]
                assert fused[i, j] == expected

    def test_tie_at_tau_routes_low(self):
        p_lo = np.array([[0.9]])
        tau = float(binary_entropy(p_lo)[0, 0])
        fused = fuse_entropy_guided(p_lo, np.array([[0.1]]), FusionConfig(tau=tau))
        assert fused[0, 0] == 0.9

    def test_idempotent_on_equal_branches(self):
        rng = np.random.default_rng(3)
        p = rng.random((6, 6))
        np.testing.assert_array_equal(fuse_entropy_guided(p, p, FusionConfig()), p)

    def test_output_is_pixelwise_member(self):
        rng = np.random.default_rng(4)
        p_lo = rng.random((7, 5))
        p_hi = rng.random((7, 5))
        fused = fuse_entropy_guided(p_lo, p_hi, FusionConfig())
        member = (fused == p_lo) | (fused == p_hi)
        assert member.all()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            fuse_entropy_guided(np.zeros((2, 2)), np.zeros((3, 3)), FusionConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FusionConfig(tau=-0.1)
        with pytest.raises(ValueError):
            FusionConfig(epsilon=0.0)


class TestThreshold:
    def test_above_level(self):
        np.testing.assert_array_equal(
            threshold(np.full((2, 2), 0.6), 0.5), np.ones((2, 2), dtype=np.uint8)
        )

    def test_exact_tie_is_background(self):
        np.testing.assert_array_equal(
            threshold(np.full((2, 2), 0.5), 0.5), np.zeros((2, 2), dtype=np.uint8)
        )

    def test_elementwise_oracle(self):
        rng = np.random.default_rng(5)
        pmap = rng.random((9, 9))
        out = threshold(pmap, 0.35)
        for i in range(9):
            for j in range(9):
                assert out[i, j] == (1 if pmap[i, j] > 0.35 else 0)

    def test_level_bounds(self):
        with pytest.raises(ValueError):
            threshold(np.zeros((2, 2)), 0.0)
        with pytest.raises(ValueError):
            threshold(np.zeros((2, 2)), 1.0)
