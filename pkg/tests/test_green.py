import numpy as np
import pytest

from signreg.errors import EmptyRestriction, PointNotOnMesh
from signreg.fem import discretize
from signreg.green import (GreenKernel, compute_kernel, green_matrix, positivity_report, refine_value,
                           restrict_kernel, uniform_grid)
from signreg.problem import cantilever, proposition11, stiff_foundation, threepoint

from oracles import cantilever_green, fd_foundation_green


def test_cantilever_kernel_closed_form():
    grid = uniform_grid(9)
    k = compute_kernel(cantilever(), 64, grid)
    np.testing.assert_allclose(k.values, cantilever_green(grid[:, None], grid[None, :]), atol=1e-12)
    assert k.symmetry_defect() < 1e-12
    assert k.provenance["n_elements"] == 64


def test_kernel_is_read_only_and_shape_checked():
    k = compute_kernel(cantilever(), 8, [0.5])
    with pytest.raises(ValueError):
        k.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        GreenKernel(np.zeros(2), np.zeros(3), np.zeros((3, 2)))


def test_grid_must_be_on_mesh():
    fact = discretize(cantilever(), 8)
    with pytest.raises(PointNotOnMesh):
        green_matrix(fact, [0.3], [0.5])


def test_csv_round_trip():
    k = compute_kernel(cantilever(), 8, [0.25, 0.5], [0.5, 1.0])
    lines = k.to_csv().splitlines()
    assert lines[0] == "t\\s,0.5,1"
    back = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]])
    np.testing.assert_array_equal(back, k.values)


@pytest.mark.parametrize("problem, expected", [
    (cantilever(), "interior-positive"),
    (proposition11(), "closed-uniform-positive"),
    (threepoint(), "interior-positive"),
    (stiff_foundation(), "sign-changing"),
])
def test_positivity_classification(problem, expected):
    k = compute_kernel(problem, 128, uniform_grid(17))
    assert positivity_report(k).classification == expected


def test_sign_change_agrees_with_finite_differences():
    k = compute_kernel(stiff_foundation(), 256, uniform_grid(33))
    rep = positivity_report(k)
    t, s = rep.argmin_closed
    n = 2560
    fd = fd_foundation_green(2000.0, n, [round(t * n)], [round(s * n)])[0, 0]
    assert np.sign(fd) == np.sign(rep.min_closed) == -1
    assert fd == pytest.approx(rep.min_closed, rel=1e-2)


def test_restriction():
    k = compute_kernel(threepoint(), 64, uniform_grid(17))
    r = restrict_kernel(k, 0.1)
    assert r.t_grid.min() >= 0.1 and r.t_grid.max() <= 0.9
    assert positivity_report(r, 0.0).classification == "closed-uniform-positive"
    with pytest.raises(EmptyRestriction):
        restrict_kernel(compute_kernel(cantilever(), 8, [0.0, 1.0]), 0.2)
    with pytest.raises(ValueError):
        restrict_kernel(k, 0.6)


def test_refine_value_exact_for_cantilever():
    for n in (4, 16, 64):
        assert refine_value(cantilever(), 0.5, 0.5, n) == pytest.approx(1 / 24, abs=1e-12)
