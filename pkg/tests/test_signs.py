import numpy as np
import pytest
from hypothesis import given, strategies as st

from signreg.errors import NotProposition11Shape
from signreg.fem import discretize, sample_grid, solve
from signreg.problem import cantilever, proposition11, threepoint
from signreg.signs import (SampledFunction, alternation_brackets, bump, check_certificate, random_sign_pattern,
                           sign_chain_certificate, sign_changes, sign_count, verify_nondecrease)

from oracles import fe_eigenloads


@pytest.mark.parametrize("values, expected", [
    ([1, 2, 3], 0), ([1, -1], 1), ([1, 0, -1, 0, 1], 2), ([0, 0], 0), ([-1, 1, -1, 1, -1], 4),
])
def test_sign_changes_examples(values, expected):
    assert sign_changes(values) == expected


def test_all_zero_flag():
    assert sign_count([0.0, 0.0]).all_zero
    assert not sign_count([0.0, 1.0]).all_zero


@given(st.lists(st.floats(-1e3, 1e3), max_size=50))
def test_sign_changes_bounded_and_scale_invariant(v):
    c = sign_changes(v)
    assert 0 <= c <= max(len(v) - 1, 0)
    assert sign_changes([3.0 * x for x in v]) == c
    assert sign_changes([-x for x in v]) == c


def test_brackets_locate_flips():
    x = np.linspace(0, 1, 11)
    br = alternation_brackets(x, np.cos(3 * np.pi * x))
    assert len(br) == 3
    for (a, b), z in zip(br, [1 / 6, 1 / 2, 5 / 6]):
        assert a < z < b


@pytest.mark.parametrize("n", range(6))
@pytest.mark.parametrize("seed", [0, 1, 17])
def test_random_pattern_has_n_changes(n, seed):
    f = random_sign_pattern(n, seed)
    assert sign_changes(f) == n
    assert np.max(np.abs(f.values)) == pytest.approx(1.0)
    assert f.values[f.points.size // 2] != 0 or n > 0


def test_random_pattern_is_reproducible():
    a, b = random_sign_pattern(3, 5), random_sign_pattern(3, 5)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, random_sign_pattern(3, 6).values)


def test_bump_is_nonnegative_hat():
    f = bump(1.0, 0.25)
    assert f.points[0] == 0.0 and f.points[-1] == 1.0
    assert f(1.0) == 1.0 and f(0.5) == 0.0 and np.all(f.values >= 0)


def test_sampled_function_round_trip():
    f = random_sign_pattern(2, 0)
    g = SampledFunction.from_dict(f.to_dict())
    np.testing.assert_array_equal(f.values, g.values)
    with pytest.raises(ValueError):
        SampledFunction([0.0, 0.0], [1.0, 2.0])


@pytest.mark.parametrize("problem", [cantilever(), proposition11(), threepoint()], ids=["cant", "prop11", "tp"])
@pytest.mark.parametrize("n", [0, 2, 4])
def test_nondecrease_on_positive_kernels(problem, n):
    fact = discretize(problem, 128)
    for seed in range(5):
        rep = verify_nondecrease(fact, random_sign_pattern(n, seed))
        assert rep.passed and rep.n_f == n
        assert len(rep.alternation_points["y"]) == rep.n_y


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def eig_fact():
    return discretize(proposition11(), 64)


@pytest.mark.parametrize("j", range(6))
def test_certificate_on_eigenloads(eig_fact, j):
    f = fe_eigenloads(eig_fact, 6)[j]
    cert, y, fact = sign_chain_certificate(eig_fact, f)
    assert cert.n == j
    assert check_certificate(cert, y, f, fact.problem) == []
    if j:
        assert cert.f_sign_changes_witnessed == j
        assert sign_changes(f) >= cert.n
        for lvl in (1, 2, 3, 4):
            pts = cert.points(lvl)
            assert np.all(np.diff(pts) > 0) and pts[0] > 0 and pts[-1] < 1


@pytest.mark.parametrize("abg", [(1, 1, 1), (0.1, 5, 2), (10, 0.2, 0.3)])
def test_certificates_across_parameters(abg):
    fact = discretize(proposition11(*abg), 128)
    done = 0
    for seed in range(3000):
        f = random_sign_pattern(1 + seed % 3, seed)
        if verify_nondecrease(fact, f).n_y == 0:
            continue
        cert, y, used = sign_chain_certificate(fact, f)
        assert check_certificate(cert, y, f, used.problem) == []
        done += 1
        if done == 4:
            break
    assert done == 4


def test_tampered_certificate_is_rejected(eig_fact):
    f = fe_eigenloads(eig_fact, 3)[2]
    cert, y, fact = sign_chain_certificate(eig_fact, f)
    pt = cert.chains[2][0]
    pt.sign = -pt.sign
    assert check_certificate(cert, y, f, fact.problem)
    pt.sign = -pt.sign
    cert.chains[4][0].point = 1.5
    assert check_certificate(cert, y, f, fact.problem)


def test_certificate_requires_shape():
    with pytest.raises(NotProposition11Shape):
        sign_chain_certificate(discretize(cantilever(), 16), random_sign_pattern(1, 0))


def test_certificate_serializes(eig_fact):
    f = fe_eigenloads(eig_fact, 2)[1]
    cert, _, _ = sign_chain_certificate(eig_fact, f)
    d = cert.to_dict()
    assert set(d["levels"]) == {"0", "1", "2", "3", "4"}
    assert d["n"] == 1
