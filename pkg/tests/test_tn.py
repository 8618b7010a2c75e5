from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from signreg.green import GreenKernel, compute_kernel, positivity_report, uniform_grid
from signreg.problem import cantilever, stiff_foundation
from signreg.tn import MinorSelection, compound_minor, tn_report

from oracles import cantilever_green


def _cofactor(a):
    if a.shape[0] == 1:
        return a[0, 0]
    return sum((-1) ** j * a[0, j] * _cofactor(np.delete(a[1:], j, axis=1)) for j in range(a.shape[0]))


@pytest.fixture(scope="module")
def cant12():
    return compute_kernel(cantilever(), 64, uniform_grid(12, include_ends=False))


def test_order_two_minor_closed_form():
    k = compute_kernel(cantilever(), 64, [0.25, 0.75])
    g = cantilever_green
    expect = g(0.25, 0.25) * g(0.75, 0.75) - g(0.25, 0.75) ** 2
    assert expect == pytest.approx(11 / 36864)
    assert compound_minor(k, MinorSelection((0, 1), (0, 1))) == pytest.approx(expect, abs=1e-12)


def test_order_one_is_entry(cant12):
    assert compound_minor(cant12, MinorSelection((3,), (7,))) == cant12.values[3, 7]


@given(st.lists(st.integers(0, 11), min_size=1, max_size=3, unique=True),
       st.lists(st.integers(0, 11), min_size=3, max_size=3, unique=True))
def test_lu_matches_cofactor_expansion(rows, cols):
    k = compute_kernel(cantilever(), 32, uniform_grid(12, include_ends=False))
    rows, cols = sorted(rows), sorted(cols)[: len(rows)]
    sel = MinorSelection(tuple(rows), tuple(cols))
    ref = _cofactor(k.values[np.ix_(rows, cols)])
    scale = np.prod(np.abs(k.values[rows]).max(axis=1))
    assert compound_minor(k, sel) == pytest.approx(ref, rel=1e-12, abs=1e-12 * scale)


def test_row_swap_negates(cant12):
    a = compound_minor(cant12, MinorSelection((1, 5), (2, 9)))
    b = compound_minor(cant12, ((5, 1), (2, 9)), ordered=False)
    assert b == pytest.approx(-a)


@pytest.mark.parametrize("rows, cols", [((1, 0), (0, 1)), ((0, 1), (0,)), ((), ())])
def test_bad_selection(rows, cols):
    with pytest.raises(ValueError):
        MinorSelection(rows, cols)


def test_cantilever_tn_up_to_four(cant12):
    rep = tn_report(cant12, 4)
    assert rep.passed
    assert rep.enumeration["4"]["mode"] == "exhaustive"
    for o in rep.orders.values():
        assert o.min_diagonal_minor > 0


def test_diagonal_minors_positive_via_cholesky():
    k = compute_kernel(cantilever(), 64, [0.25, 0.5, 0.75])
    np.linalg.cholesky(k.values)
    assert compound_minor(k, MinorSelection((0, 1, 2), (0, 1, 2))) > 0


def test_sign_changing_kernel_has_order_one_violations():
    k = compute_kernel(stiff_foundation(), 128, uniform_grid(16, include_ends=False))
    rep = tn_report(k, 2)
    assert rep.orders[1].violations
    assert positivity_report(k).classification == "sign-changing"


def test_order_one_agrees_with_positivity(cant12):
    rep = tn_report(cant12, 1)
    assert rep.passed == (positivity_report(cant12).min_closed >= 0)


def test_sampling_beyond_cap_is_seeded():
    k = compute_kernel(cantilever(), 64, uniform_grid(30, include_ends=False))
    a = tn_report(k, 5, samples=500, seed=4).to_dict()
    b = tn_report(k, 5, samples=500, seed=4).to_dict()
    assert a["enumeration"]["5"] == {"mode": "sampled", "seed": 4, "count": 500, "population": 142506 ** 2}
    assert a == b


def test_max_order_bound():
    k = GreenKernel(np.arange(3.0), np.arange(3.0), np.eye(3))
    with pytest.raises(ValueError):
        tn_report(k, 4)
