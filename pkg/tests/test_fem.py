import numpy as np
import pytest
from hypothesis import given, strategies as st

from signreg.errors import MeshMissingAtom, NotPositiveDefinite, OutOfDomain, PointNotOnMesh
from signreg.fem import (Mesh, PointLoad, assemble, assemble_term, band_to_dense, build_mesh, discretize,
                         element_matrices, hermite_basis, hermite_interpolant, quadrature_form, solve)
from signreg.problem import (AtomicTerm, GeneralizedCoefficient, Problem, ScalarCoefficient, SubspaceSpec,
                             cantilever, proposition11, threepoint)
from signreg.signs import SampledFunction

from oracles import cantilever_green

ONE = ScalarCoefficient.constant(1.0)


def test_hermite_basis_nodal_values():
    h = 0.3
    v0 = hermite_basis(np.array([0.0, 1.0]), h)
    d0 = hermite_basis(np.array([0.0, 1.0]), h, 1)
    np.testing.assert_allclose(v0, [[1, 0], [0, 0], [0, 1], [0, 0]], atol=1e-15)
    np.testing.assert_allclose(d0, [[0, 0], [1, 0], [0, 0], [0, 1]], atol=1e-15)


def test_beam_element_matrix():
    # classical Euler-Bernoulli element stiffness for p = 1
    h = 0.25
    mesh = Mesh(np.array([0.0, h, 1.0]))
    k = element_matrices(Problem(ONE), mesh)[0]
    ref = np.array([[12, 6 * h, -12, 6 * h], [6 * h, 4 * h**2, -6 * h, 2 * h**2],
                    [-12, -6 * h, 12, -6 * h], [6 * h, 2 * h**2, -6 * h, 4 * h**2]]) / h**3
    np.testing.assert_allclose(k, ref, rtol=1e-13)


def test_mesh_contains_atoms_and_extra_points():
    m = build_mesh(threepoint(), 10, [0.123])
    for x in (0.5, 1.0, 0.123):
        m.node_index(x)
    with pytest.raises(PointNotOnMesh):
        m.node_index(0.321)
    with pytest.raises(OutOfDomain):
        build_mesh(cantilever(), 8, [1.5])


@pytest.mark.parametrize("n", [2, 3, 7, 64])
def test_cantilever_green_exact_at_nodes(n):
    fact = discretize(cantilever(), n, [0.5])
    y = solve(fact, PointLoad(0.5))
    x = fact.mesh.nodes
    np.testing.assert_allclose(y(x), cantilever_green(x, 0.5), atol=1e-12)


def test_tip_load_matches_closed_form():
    fact = discretize(cantilever(), 16)
    y = solve(fact, PointLoad(1.0))
    t = np.linspace(0, 1, 41)
    np.testing.assert_allclose(y(t), t**2 * (3 - t) / 6, atol=1e-12)


def test_uniform_load_cubic_space_nodes():
    # y'''' = 1 clamped-free: y = x^2 (x^2 - 4x + 6) / 24, nodally exact
    fact = discretize(cantilever(), 8)
    y = solve(fact, SampledFunction(np.array([0.0, 1.0]), np.array([1.0, 1.0])))
    x = fact.mesh.nodes
    np.testing.assert_allclose(y(x), x**2 * (x**2 - 4 * x + 6) / 24, atol=1e-13)


def test_dipole_load_is_derivative_of_point_load():
    fact = discretize(cantilever(), 32, [0.5])
    y1 = solve(fact, PointLoad(0.5, 1))
    # <delta', z> = -z'(1/2): response is -d/ds G(t, s) at s = 1/2
    t = np.linspace(0, 1, 33)
    eps = 1e-6
    fd = -(cantilever_green(t, 0.5 + eps) - cantilever_green(t, 0.5 - eps)) / (2 * eps)
    np.testing.assert_allclose(y1(t), fd, atol=1e-8)


def test_operator_symmetric_and_assembles_terms():
    op = assemble(threepoint(), build_mesh(threepoint(), 16))
    a = op.dense()
    np.testing.assert_allclose(a, a.T)
    full = band_to_dense(op.full_band)
    terms = sum(assemble_term(threepoint(), op.mesh, t) for t in ("p", "q", "h"))
    np.testing.assert_allclose(full, terms, atol=1e-10)


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_form_of_cubics_matches_quadrature(c1, c2):
    pr = threepoint()
    mesh = build_mesh(pr, 8)
    op = assemble(pr, mesh)
    P = np.polynomial.polynomial
    u = hermite_interpolant(mesh, lambda x: P.polyval(x, c1), lambda x: P.polyval(x, P.polyder(c1)))
    v = hermite_interpolant(mesh, lambda x: P.polyval(x, c2), lambda x: P.polyval(x, P.polyder(c2)))
    scale = 1 + abs(op.form(u, u)) + abs(op.form(v, v))
    assert op.form(u, v) == pytest.approx(quadrature_form(pr, u, v), abs=1e-9 * scale)
    assert op.form(u, v) == pytest.approx(op.form(v, u), abs=1e-12 * scale)


def test_indefinite_form_is_reported():
    bad = Problem(ONE, h=GeneralizedCoefficient(ScalarCoefficient.constant(-1e4)), subspace=SubspaceSpec.clamped(0))
    with pytest.raises(NotPositiveDefinite) as err:
        discretize(bad, 32)
    assert err.value.min_pivot is not None
    # the free beam has a two-dimensional kernel
    with pytest.raises(NotPositiveDefinite):
        discretize(Problem(ONE), 16)


def test_prop11_positive_definite():
    fact = discretize(proposition11(), 32)
    assert fact.min_pivot > 0
