import numpy as np
import pytest

from signreg.fem import discretize, solve
from signreg.problem import cantilever, threepoint
from signreg.recovery import continuity_jumps, flux, flux_at, moment, moment_at, strong_residuals
from signreg.signs import SampledFunction

from oracles import threepoint_exact

ONE = SampledFunction(np.array([0.0, 1.0]), np.array([1.0, 1.0]))


@pytest.fixture(scope="module")
def exact():
    return threepoint_exact()


@pytest.fixture(scope="module")
def tp256():
    fact = discretize(threepoint(), 256)
    return fact, solve(fact, ONE)


def test_solution_matches_exact(exact, tp256):
    fact, y = tp256
    x = fact.mesh.nodes[::16]
    ref = np.array([exact(t) for t in x])
    np.testing.assert_allclose(y(x), ref, atol=1e-9 * np.max(np.abs(ref)))


@pytest.mark.parametrize("x, side", [(0.3, "right"), (0.5, "left"), (0.5, "right"), (0.9, "left"), (1.0, "left")])
def test_recovered_moment_and_flux(exact, tp256, x, side):
    _, y = tp256
    # on each piece y'''' = 1 - y, p = 1, q smooth = 0: M = y'', F = y'''
    assert moment_at(y, threepoint(), 1.0, x, side) == pytest.approx(exact(x, 2, side), abs=1e-8)
    assert flux_at(y, threepoint(), 1.0, x, side) == pytest.approx(exact(x, 3, side), abs=1e-7)


def test_recovery_beats_raw_third_derivative(exact, tp256):
    _, y = tp256
    raw = abs(float(y(0.3, 3)) - exact(0.3, 3))
    rec = abs(flux_at(y, threepoint(), 1.0, 0.3) - exact(0.3, 3))
    assert rec < raw / 100


def test_vectorized_matches_scalar(tp256):
    _, y = tp256
    x = np.array([0.1, 0.2, 0.7])
    np.testing.assert_allclose(moment(y, threepoint(), 1.0, x), [moment_at(y, threepoint(), 1.0, t) for t in x])
    np.testing.assert_allclose(flux(y, threepoint(), None, x), [flux_at(y, threepoint(), None, t) for t in x])


def test_strong_residuals_small(tp256):
    _, y = tp256
    rows = strong_residuals(y, threepoint(), 1.0)
    # the clamped end has no free direction: 2 rows at 1/2, 2 at the free end
    assert {r["location"] for r in rows} == {0.5, 1.0}
    assert len(rows) == 4
    ynorm = y.sup_norm()
    for r in rows:
        assert abs(r["residual"]) <= 1e-6 * ynorm


def test_residuals_for_cantilever_tip_load():
    fact = discretize(cantilever(), 32)
    y = solve(fact, None)
    assert all(r["residual"] == 0 for r in strong_residuals(y, cantilever(), None))


def test_continuity_jumps(tp256):
    _, y = tp256
    j = continuity_jumps(y, 0.5)
    assert j["d0"] == 0 and j["d1"] == 0
    assert abs(j["d2"]) < 1e-8
