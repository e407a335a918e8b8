import math

import numpy as np
import pytest

from cbrec import geometry as G
from cbrec import weights as W


@pytest.fixture()
def det():
    return G.DetectorGrid(16, 16, (2.0, 2.0))


@pytest.fixture()
def lines():
    return G.LineGrid(n_s=33, s_spacing=1.5, n_mu=24)


D = 199.0


class TestFixedMaps:
    def test_cosine_values(self, det):
        w = W.cosine_weight(det, D).values
        x = det.x_values()
        y = det.y_values()
        # principal point is between pixels on an even grid; check a known pixel
        i, j = 4, 11
        expected = D / math.sqrt(x[j] ** 2 + y[i] ** 2 + D * D)
        assert w[i, j] == pytest.approx(expected, rel=1e-14)
        assert np.all(w > 0) and np.all(w <= 1.0)

    def test_cosine_principal_point_is_one(self):
        det_odd = G.DetectorGrid(5, 5, (1.0, 1.0))
        w = W.cosine_weight(det_odd, D).values
        assert w[2, 2] == pytest.approx(1.0, abs=1e-15)

    def test_cosine_at_distance_D(self):
        det_wide = G.DetectorGrid(3, 3, (1.0, D))
        w = W.cosine_weight(det_wide, D).values
        assert w[1, 2] == pytest.approx(1 / math.sqrt(2), rel=1e-12)

    def test_sinogram_weight(self, lines):
        w = W.sinogram_weight(lines, D).values
        s = lines.s_values()
        assert w.shape == lines.shape
        expected = np.broadcast_to((s * s + D * D) / D ** 2, w.shape)
        np.testing.assert_allclose(w, expected, rtol=1e-15)
        mid = lines.n_s // 2
        assert w[0, mid] == pytest.approx(1.0)
        np.testing.assert_array_equal(w, w[:, ::-1])

    def test_sinogram_weight_at_s_equal_D(self):
        g = G.LineGrid(n_s=3, s_spacing=D, n_mu=2)
        w = W.sinogram_weight(g, D).values
        assert w[0, 0] == pytest.approx(2.0) and w[0, 2] == pytest.approx(2.0)

    def test_detector_weight(self, det):
        w = W.detector_weight(det, D).values
        x = det.x_values()
        y = det.y_values()
        np.testing.assert_allclose(
            w, x[None, :] ** 2 + y[:, None] ** 2 + D * D, rtol=1e-15
        )

    def test_detector_times_cosine_squared_is_D_squared(self, det):
        wc = W.cosine_weight(det, D).values
        wd = W.detector_weight(det, D).values
        np.testing.assert_allclose(wd * wc * wc, D * D, rtol=1e-12)


class TestApplyWeight:
    def test_identity_zero_and_broadcast(self, lines):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((5,) + lines.shape)
        ones = W.WeightMap(np.ones(lines.shape), domain="line")
        np.testing.assert_array_equal(W.apply_weight(data, ones), data)
        zero = W.WeightMap(np.zeros(lines.shape), domain="line")
        assert not W.apply_weight(data, zero).any()

    def test_self_adjoint(self, lines):
        rng = np.random.default_rng(1)
        wmap = W.WeightMap(rng.standard_normal(lines.shape), domain="line")
        x = rng.standard_normal(lines.shape)
        y = rng.standard_normal(lines.shape)
        lhs = np.sum(W.apply_weight(x, wmap) * y)
        rhs = np.sum(x * W.apply_weight(y, wmap))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_shape_mismatch(self, lines):
        wmap = W.WeightMap(np.ones(lines.shape), domain="line")
        with pytest.raises(ValueError):
            W.apply_weight(np.zeros((4, 5)), wmap)


class TestGaussianSmooth:
    def test_sigma_zero_is_identity(self, lines):
        rng = np.random.default_rng(2)
        m = W.WeightMap(rng.standard_normal(lines.shape), domain="line")
        out = W.gaussian_smooth(m, 0.0)
        np.testing.assert_array_equal(out.values, m.values)

    def test_constant_unchanged(self, lines):
        m = W.WeightMap(np.full(lines.shape, 3.25), domain="line")
        out = W.gaussian_smooth(m, 2.0)
        np.testing.assert_allclose(out.values, 3.25, rtol=1e-12)

    def test_impulse_kernel_mass(self, lines):
        m = np.zeros(lines.shape)
        m[lines.n_mu // 2, lines.n_s // 2] = 1.0
        out = W.gaussian_smooth(W.WeightMap(m, domain="line"), 1.5)
        assert out.values.sum() == pytest.approx(1.0, abs=1e-6)
        assert out.values[lines.n_mu // 2, lines.n_s // 2] == out.values.max()

    def test_mean_preserved(self, lines):
        rng = np.random.default_rng(3)
        m = W.WeightMap(rng.standard_normal(lines.shape), domain="line")
        out = W.gaussian_smooth(m, 2.0)
        assert out.values.mean() == pytest.approx(m.values.mean(), rel=1e-6, abs=1e-12)

    def test_seam_matches_extended_circle_oracle(self, lines):
        """Oracle: extend the map to mu in [0, 2pi) with the antipodal
        identification (s, mu+pi) == (-s, mu), smooth with plain circular
        padding there, restrict back.  Must match the seam-aware smoothing."""
        rng = np.random.default_rng(4)
        m = rng.standard_normal(lines.shape)
        sigma = 1.5
        got = W.gaussian_smooth(W.WeightMap(m, domain="line"), sigma).values

        kern = W._gaussian_kernel(sigma)
        pad = len(kern) // 2
        ext = np.vstack([m, m[:, ::-1]])  # mu in [0, 2pi)
        ext = np.pad(ext, ((pad, pad), (0, 0)), mode="wrap")
        ext = np.pad(ext, ((0, 0), (pad, pad)), mode="symmetric")
        tmp = np.empty((2 * lines.n_mu, ext.shape[1]))
        for j in range(ext.shape[1]):
            tmp[:, j] = np.convolve(ext[:, j], kern, mode="valid")
        oracle = np.empty((2 * lines.n_mu, lines.n_s))
        for i in range(2 * lines.n_mu):
            oracle[i] = np.convolve(tmp[i], kern, mode="valid")
        np.testing.assert_allclose(got, oracle[: lines.n_mu], rtol=1e-12, atol=1e-14)
