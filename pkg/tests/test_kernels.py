"""Both routes of every hot kernel must agree on identical inputs."""

import os
import subprocess
import sys
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from signreg import kernels
from signreg._accel import HAVE_NUMBA
from signreg.fem import assemble, band_to_dense, build_mesh
from signreg.problem import threepoint

routes = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _spd_band(n, w, seed):
    rng = np.random.default_rng(seed)
    ab = rng.standard_normal((w + 1, n))
    ab[0] = np.abs(ab[0]) + 4 * w + 1
    return ab


@routes
@pytest.mark.parametrize("n, w", [(1, 0), (5, 1), (40, 3), (200, 3)])
def test_ldlt_routes_agree(n, w):
    ab = _spd_band(n, w, n)
    lb1, d1, f1 = kernels.ldlt_band(ab, use_numba=True)
    lb0, d0, f0 = kernels.ldlt_band(ab, use_numba=False)
    assert f1 == f0 == -1
    np.testing.assert_allclose(lb1, lb0, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(d1, d0, rtol=1e-13)
    b = np.random.default_rng(1).standard_normal((n, 3))
    for fast in (True, False):
        x = kernels.ldlt_solve(lb0, d0, b, use_numba=fast)
        np.testing.assert_allclose(band_to_dense(ab) @ x, b, atol=1e-10)


@pytest.mark.parametrize("fast", [False] + ([True] if HAVE_NUMBA else []))
def test_ldlt_reports_failing_pivot(fast):
    ab = _spd_band(10, 3, 0)
    ab[0, 6] = -100.0
    _, d, fail = kernels.ldlt_band(ab, 0.0, use_numba=fast)
    assert fail == 6 and d[6] < 0


@routes
def test_ldlt_on_assembled_operator():
    op = assemble(threepoint(), build_mesh(threepoint(), 32))
    _, d1, _ = kernels.ldlt_band(op.band, use_numba=True)
    _, d0, _ = kernels.ldlt_band(op.band, use_numba=False)
    np.testing.assert_allclose(d1, d0, rtol=1e-12)


@routes
@given(arrays(np.float64, st.integers(0, 60), elements=st.floats(-5, 5)), st.sampled_from([0.0, 1e-3, 0.5]))
def test_alternations_routes_agree(v, tol):
    assert kernels.alternations(v, tol, use_numba=True) == kernels.alternations(v, tol, use_numba=False)


@pytest.mark.parametrize("values, count", [([1, -1, 1], 2), ([0, 0, 0], 0), ([1, 0, 0, 1], 0), ([1, 0, -1], 1),
                                           ([-2, 1e-12, 3, -1], 2)])
def test_alternations_examples(values, count):
    assert kernels.alternations(np.array(values, float), 1e-9)[0] == count


@routes
@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_minor_table_routes_agree(r):
    g = np.random.default_rng(r).random((7, 7))
    sel = np.array(list(combinations(range(7), r)), dtype=np.int64)
    d1, s1 = kernels.minor_table(g, sel, sel, use_numba=True)
    d0, s0 = kernels.minor_table(g, sel, sel, use_numba=False)
    np.testing.assert_allclose(d1, d0, rtol=1e-10, atol=1e-14)
    np.testing.assert_array_equal(s1, s0)


@pytest.mark.parametrize("fast", [False] + ([True] if HAVE_NUMBA else []))
def test_minor_table_matches_numpy_det(fast):
    g = np.random.default_rng(3).standard_normal((6, 5))
    rows = np.array(list(combinations(range(6), 3)), dtype=np.int64)
    cols = np.array(list(combinations(range(5), 3)), dtype=np.int64)
    det, _ = kernels.minor_table(g, rows, cols, use_numba=fast)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            assert det[i, j] == pytest.approx(np.linalg.det(g[np.ix_(r, c)]), abs=1e-12)


def test_env_flag_selects_numpy_route():
    code = "from signreg._accel import USE_NUMBA, backend; print(USE_NUMBA, backend())"
    env = dict(os.environ, SIGNREG_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "numpy"]
