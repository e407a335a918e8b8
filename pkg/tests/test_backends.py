"""The numba kernels and the pure-numpy fallback must agree sample-for-sample."""

import importlib

import numpy as np
import pytest

from cbrec.kernels import _numpy as knp

try:
    from cbrec.kernels import _numba as knb

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


@pytest.fixture(scope="module")
def cone_args():
    rng = np.random.default_rng(0)
    n_lam = 6
    lam = 2 * np.pi * np.arange(n_lam) / n_lam
    R, D = 66.0, 199.0
    srcs = np.stack([R * np.cos(lam), R * np.sin(lam), 0 * lam], axis=1)
    eus = np.stack([-np.sin(lam), np.cos(lam), 0 * lam], axis=1)
    evs = np.stack([0 * lam, 0 * lam, 1 + 0 * lam], axis=1)
    ews = -np.stack([np.cos(lam), np.sin(lam), 0 * lam], axis=1)
    vol = rng.standard_normal((10, 11, 12))
    return vol, srcs, eus, evs, ews, D


@needs_numba
class TestBackendAgreement:
    def test_radon_forward(self):
        rng = np.random.default_rng(1)
        img = rng.standard_normal((20, 24))
        args = (1.1, 0.9, 0.3, -0.2, 25, 1.3, 16, 18.0, 41)
        a = knb.radon2d_forward(img, *args)
        b = knp.radon2d_forward(img, *args)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)

    def test_radon_adjoint(self):
        rng = np.random.default_rng(2)
        sino = rng.standard_normal((16, 25))
        args = (20, 24, 1.1, 0.9, 0.3, -0.2, 1.3, 18.0, 41, 0.77)
        a = knb.radon2d_adjoint(sino, *args)
        b = knp.radon2d_adjoint(sino, *args)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)

    def test_cone_forward(self, cone_args):
        vol, srcs, eus, evs, ews, D = cone_args
        args = (0.8, -4.4, -4.0, -3.6, srcs, eus, evs, ews, D,
                14, 15, 3.0, 2.8, 0.1, -0.1, 0.4)
        a = knb.cone_forward(vol, *args)
        b = knp.cone_forward(vol, *args)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)

    def test_cone_backproject_both_modes(self, cone_args):
        vol, srcs, eus, evs, ews, D = cone_args
        rng = np.random.default_rng(3)
        stack = rng.standard_normal((6, 14, 15))
        dlam = np.full(6, 2 * np.pi / 6)
        for mode in (0, 1):
            out_a = np.zeros(vol.shape)
            out_b = np.zeros(vol.shape)
            args = (0.8, -4.4, -4.0, -3.6, srcs, eus, evs, ews, D,
                    3.0, 2.8, 0.1, -0.1, dlam, mode, 66.0)
            knb.cone_backproject_accum(out_a, stack, *args)
            knp.cone_backproject_accum(out_b, stack, *args)
            np.testing.assert_allclose(out_a, out_b, rtol=1e-12, atol=1e-13)

    def test_cone_backproject_adjoint(self, cone_args):
        vol, srcs, eus, evs, ews, D = cone_args
        args = (0.8, -4.4, -4.0, -3.6, srcs, eus, evs, ews, D,
                14, 15, 3.0, 2.8, 0.1, -0.1, 0.123)
        a = knb.cone_backproject_adjoint(vol, *args)
        b = knp.cone_backproject_adjoint(vol, *args)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


class TestThreads:
    @needs_numba
    def test_set_num_threads_keeps_results_identical(self):
        import cbrec.kernels as K
        import numba

        rng = np.random.default_rng(0)
        img = rng.standard_normal((16, 16))
        args = (1.0, 1.0, 0.0, 0.0, 17, 1.0, 12, 11.3, 23)
        before = knb.radon2d_forward(img, *args)
        original = numba.get_num_threads()
        try:
            K.set_num_threads(1)
            after = knb.radon2d_forward(img, *args)
        finally:
            numba.set_num_threads(original)
        np.testing.assert_array_equal(before, after)

    def test_zero_is_noop(self):
        import cbrec.kernels as K

        K.set_num_threads(0)


class TestBackendSelection:
    def test_env_flag_selects_numpy(self, monkeypatch):
        monkeypatch.setenv("CBREC_BACKEND", "numpy")
        import cbrec.kernels as K

        importlib.reload(K)
        assert K.BACKEND == "numpy"
        assert K.radon2d_forward is knp.radon2d_forward
        monkeypatch.delenv("CBREC_BACKEND")
        importlib.reload(K)

    def test_bad_flag_rejected(self, monkeypatch):
        monkeypatch.setenv("CBREC_BACKEND", "fortran")
        import cbrec.kernels as K

        with pytest.raises(ValueError):
            importlib.reload(K)
        monkeypatch.delenv("CBREC_BACKEND")
        importlib.reload(K)

    def test_numpy_backend_runs_pipeline_end_to_end(self, monkeypatch):
        """The fallback drives the full chain on a tiny instance."""
        monkeypatch.setenv("CBREC_BACKEND", "numpy")
        import cbrec.kernels as K

        importlib.reload(K)
        try:
            import cbrec.transforms as T

            importlib.reload(T)
            from cbrec import geometry as G

            det = G.DetectorGrid(12, 12, (4.0, 4.0))
            lines = G.LineGrid(n_s=17, s_spacing=2.0, n_mu=12)
            rng = np.random.default_rng(0)
            x = rng.standard_normal(det.shape)
            y = rng.standard_normal(lines.shape)
            lhs = np.sum(T.radon2d(x, det, lines) * y) * lines.s_spacing * lines.mu_spacing
            rhs = np.sum(x * T.radon2d_adjoint(y, lines, det)) * 16.0
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))
        finally:
            monkeypatch.delenv("CBREC_BACKEND")
            importlib.reload(K)
            import cbrec.transforms as T

            importlib.reload(T)
