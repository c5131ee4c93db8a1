import numpy as np
import pytest

from mvrseg.probe import init_probe_params
from mvrseg.synthetic import generate_synthetic_case
from mvrseg.views import (
    MissingProbeError,
    MissingViewError,
    ViewSpec,
    apply_inverse_transform,
    predict_view,
    tta_average,
)


class TestInverseTransform:
    def test_identity(self):
        m = np.random.default_rng(0).random((3, 4))
        np.testing.assert_array_equal(apply_inverse_transform(m, "id"), m)

    def test_hflip_reverses_columns(self):
        m = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(apply_inverse_transform(m, "hflip"), [[3.0, 2.0, 1.0]])

    def test_vflip_reverses_rows(self):
        m = np.array([[1.0], [2.0], [3.0]])
        np.testing.assert_array_equal(apply_inverse_transform(m, "vflip"), [[3.0], [2.0], [1.0]])

    @pytest.mark.parametrize("transform", ["id", "hflip", "vflip"])
    def test_involution(self, transform):
        m = np.random.default_rng(1).random((5, 7))
        twice = apply_inverse_transform(apply_inverse_transform(m, transform), transform)
        np.testing.assert_array_equal(twice, m)

    def test_unknown_transform(self):
        with pytest.raises(ValueError):
            apply_inverse_transform(np.zeros((2, 2)), "rot180")


class TestPredictView:
    def _case(self, noise=0.0):
        views, mask, _ = generate_synthetic_case(
            7, 8, 8, 6, out_h=16, out_w=16, noise_sigma=noise
        )
        specs = {ViewSpec(128, t): fs for t, fs in views.items()}
        params = {128: init_probe_params(6, 4, seed=3)}
        return specs, params

    def test_identity_view_is_plain_prediction(self):
        from mvrseg.probe import predict_probability

        specs, params = self._case()
        view = ViewSpec(128, "id")
        out = predict_view(specs, view, params, 16, 16)
        np.testing.assert_array_equal(out, predict_probability(specs[view], params[128], 16, 16))

    def test_flip_views_align_for_symmetric_features(self):
        # with zero noise every flipped stack is the exact flip of the
        # identity stack, so inverse-transformed predictions coincide
        specs, params = self._case(noise=0.0)
        base = predict_view(specs, ViewSpec(128, "id"), params, 16, 16)
        for t in ("hflip", "vflip"):
            aligned = predict_view(specs, ViewSpec(128, t), params, 16, 16)
            np.testing.assert_allclose(aligned, base, atol=1e-6)

    def test_missing_view_error(self):
        specs, params = self._case()
        del specs[ViewSpec(128, "hflip")]
        with pytest.raises(MissingViewError):
            predict_view(specs, ViewSpec(128, "hflip"), params, 16, 16)

    def test_missing_probe_error(self):
        specs, _ = self._case()
        with pytest.raises(MissingProbeError):
            predict_view(specs, ViewSpec(128, "id"), {}, 16, 16)


class TestTtaAverage:
    def test_single_map(self):
        m = np.random.default_rng(0).random((4, 4)).astype(np.float32)
        np.testing.assert_allclose(tta_average([m]), m, atol=1e-7)

    def test_constant_pair(self):
        a = np.full((3, 3), 0.2)
        b = np.full((3, 3), 0.8)
        np.testing.assert_allclose(tta_average([a, b]), 0.5, atol=1e-7)

    def test_three_values(self):
        maps = [np.full((1, 1), v) for v in (0.1, 0.2, 0.6)]
        assert tta_average(maps)[0, 0] == pytest.approx(0.3, abs=1e-7)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        maps = [rng.random((5, 5)) for _ in range(4)]
        a = tta_average(maps)
        b = tta_average(maps[::-1])
        np.testing.assert_allclose(a, b, atol=1e-7)

    def test_range_never_widens(self):
        rng = np.random.default_rng(3)
        maps = [rng.random((6, 6)) for _ in range(3)]
        out = tta_average(maps)
        lo = np.minimum.reduce(maps)
        hi = np.maximum.reduce(maps)
        assert (out >= lo - 1e-6).all() and (out <= hi + 1e-6).all()

    def test_errors(self):
        with pytest.raises(ValueError):
            tta_average([])
        with pytest.raises(ValueError):
            tta_average([np.zeros((2, 2)), np.zeros((3, 3))])


def test_view_spec_validation():
    with pytest.raises(ValueError):
        ViewSpec(512, "diag")
    assert ViewSpec(512, "id").resolution == 512
