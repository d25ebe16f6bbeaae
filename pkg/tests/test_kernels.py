import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from pcr import kernels
from pcr.icpcov import rotation_derivatives


def make_inputs(rng, n=40):
    pts_p = np.ascontiguousarray(rng.normal(size=(n, 3)))
    pts_q = np.ascontiguousarray(rng.normal(size=(n, 3)))
    rot, drot, ddrot = rotation_derivatives(0.3, -0.2, 0.9)
    trans = np.array([0.1, -0.4, 0.2])
    return pts_p, pts_q, rot, trans, drot, ddrot


@pytest.mark.skipif(not kernels.NUMBA_ENABLED, reason="numba not active")
class TestJitMatchesFallback:
    def test_hessian_xx(self, rng):
        pts_p, pts_q, rot, trans, drot, ddrot = make_inputs(rng)
        jit = kernels.hessian_xx_accum(pts_p, pts_q, rot, trans, drot, ddrot)
        ref = kernels._py_hessian_xx_accum(pts_p, pts_q, rot, trans, drot, ddrot)
        assert np.allclose(jit, ref, rtol=1e-13, atol=1e-13)

    def test_hessian_zx(self, rng):
        pts_p, pts_q, rot, trans, drot, ddrot = make_inputs(rng)
        jit = kernels.hessian_zx_accum(pts_p, pts_q, rot, trans, drot)
        ref = kernels._py_hessian_zx_accum(pts_p, pts_q, rot, trans, drot)
        assert np.allclose(jit, ref, rtol=1e-13, atol=1e-13)

    def test_epipolar_residuals(self, rng):
        rays_s = rng.normal(size=(60, 3))
        rays_s /= np.linalg.norm(rays_s, axis=1, keepdims=True)
        rays_t = rng.normal(size=(60, 3))
        rays_t /= np.linalg.norm(rays_t, axis=1, keepdims=True)
        e = rng.normal(size=(3, 3))
        jit = kernels.epipolar_residuals(e, rays_s, rays_t)
        ref = kernels._py_epipolar_residuals(e, rays_s, rays_t)
        assert np.allclose(jit, ref, rtol=1e-13, atol=1e-16)


def test_env_flag_selects_fallback():
    code = textwrap.dedent("""
        import numpy as np
        from pcr import kernels
        assert not kernels.NUMBA_ENABLED
        assert kernels.hessian_xx_accum is kernels._py_hessian_xx_accum
        rng = np.random.default_rng(3)
        p = rng.normal(size=(5, 3)); q = rng.normal(size=(5, 3))
        from pcr.icpcov import rotation_derivatives
        rot, drot, ddrot = rotation_derivatives(0.1, 0.2, 0.3)
        h = kernels.hessian_xx_accum(p, q, rot, np.zeros(3), drot, ddrot)
        print(repr(float(h[0, 0])))
    """)
    env = dict(os.environ, PCR_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert float(out.stdout.strip()) == 10.0  # 2n with n = 5


def test_epipolar_residual_formula(rng):
    # residual is 1 - cos(angle between ray_t and the epipolar plane)
    e = rng.normal(size=(3, 3))
    rays_s = rng.normal(size=(30, 3))
    rays_s /= np.linalg.norm(rays_s, axis=1, keepdims=True)
    rays_t = rng.normal(size=(30, 3))
    rays_t /= np.linalg.norm(rays_t, axis=1, keepdims=True)
    got = kernels.epipolar_residuals(e, rays_s, rays_t)
    for i in range(30):
        normal = e @ rays_s[i]
        normal = normal / np.linalg.norm(normal)
        sin_to_plane = abs(rays_t[i] @ normal)
        expected = 1.0 - np.sqrt(1.0 - min(1.0, sin_to_plane**2))
        assert got[i] == pytest.approx(expected, abs=1e-15)


def test_ray_through_epipole_scores_zero():
    e = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    null_ray = np.array([[0.0, 0.0, 1.0]])  # E @ ray = 0
    other = np.array([[0.6, 0.0, 0.8]])
    out = kernels.epipolar_residuals(e, null_ray, other)
    assert out[0] == 0.0
