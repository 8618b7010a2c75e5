"""One-sided recovery of the moment p y'' and the flux (p y'')' - q y' from a discrete solution.

Raw Hermite derivatives lose accuracy fast: y''' is piecewise constant and
only O(h) accurate, y'' at a node only O(h^2).  Away from atoms the strong
equation ``(p y'')'' - (q y')' + h y = f`` gives exact local information:

* the flux ``F = (p y'')' - q y'`` satisfies ``F' = f - h y``, so it is
  carried from the element midpoint (where y''' is superconvergent) to the
  target by integrating the right-hand side;
* the moment ``M = p y''`` is interpolated through the two element Gauss
  points, where it is superconvergent, plus the curvature ``M'' = f - h y + (q y')'``.

Only the smooth parts of q and h enter; atoms live on nodes and are seen
through the choice of side.
"""

from __future__ import annotations

import numpy as np

from .fem import FiniteElementFunction
from .problem import Problem

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_G = 0.5 / np.sqrt(3.0)


def _smooth(coef, x, deriv=0):
    if coef is None or coef.smooth is None:
        return np.zeros_like(x)
    return coef.smooth(x, deriv)


def _load(f, x):
    if f is None:
        return np.zeros_like(x)
    if np.isscalar(f):
        return np.full_like(x, float(f))
    return np.asarray(f(x), dtype=float)


def _element(y: FiniteElementFunction, x, side):
    mesh = y.mesh
    e = mesh.element_of(x, side)
    a = mesh.nodes[e]
    h = mesh.nodes[e + 1] - a
    return a + 0.5 * h, h


def flux(y: FiniteElementFunction, problem: Problem, f, x, side: str = "right"):
    """Recovered ``(p y'')' - q_smooth y'`` at ``x`` from the element on ``side``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mid, _ = _element(y, x, side)
    p = problem.p
    fm = p(mid, 1) * y(mid, 2) + p(mid) * y(mid, 3) - _smooth(problem.q, mid) * y(mid, 1)
    # integral of f - h y from mid to x by Gauss-Legendre on each segment
    half = 0.5 * (x - mid)
    nodes = mid[:, None] + half[:, None] * (1.0 + _GL_X[None, :])
    s = nodes.ravel()
    rhs = (_load(f, s) - _smooth(problem.h, s) * y(s)).reshape(nodes.shape)
    return fm + half * (rhs @ _GL_W)


def moment(y: FiniteElementFunction, problem: Problem, f, x, side: str = "right"):
    """Recovered ``p y''`` at ``x`` from the element on ``side``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mid, h = _element(y, x, side)
    p = problem.p
    g1, g2 = mid - _G * h, mid + _G * h
    # y(g, 2, side) stays inside the element: Gauss points are interior
    m1, m2 = p(g1) * y(g1, 2), p(g2) * y(g2, 2)
    lin = m1 + (m2 - m1) * (x - g1) / (g2 - g1)
    qs = problem.q
    curv = (_load(f, mid) - _smooth(problem.h, mid) * y(mid)
            + _smooth(qs, mid, 1) * y(mid, 1) + _smooth(qs, mid) * y(mid, 2))
    return lin + 0.5 * curv * (x - g1) * (x - g2)


def scalar(fn):
    """Wrap a vectorized recovery so scalar input gives a float."""
    def wrapped(y, problem, f, x, side="right"):
        out = fn(y, problem, f, x, side)
        return float(out[0]) if np.ndim(x) == 0 else out
    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


flux_at = scalar(flux)
moment_at = scalar(moment)


def _one_sided(fn, y, problem, f, a, side):
    # outside [0, 1] the solution is extended by zero
    if (a <= 0.0 and side == "left") or (a >= 1.0 and side == "right"):
        return 0.0
    return float(fn(y, problem, f, np.array([a]), side)[0])


def strong_residuals(y: FiniteElementFunction, problem: Problem, f, locations=None) -> list:
    """Residuals of the point conditions hidden in the weak form.

    At each location ``a`` (interior atom locations and both endpoints by
    default) the form leaves two coefficients, of ``z(a)`` and ``z'(a)``::

        R_val = [F]_a + sum_h0 c y(a) - sum_h1 c y'(a)
        R_der = -[M]_a + sum_q c y'(a) - sum_h1 c y(a)

    with jumps ``[X]_a = X(a+) - X(a-)`` and X taken as zero outside [0, 1].
    At an endpoint only the admissible directions of the subspace count, so
    the pair is projected onto its free basis.
    """
    if locations is None:
        interior = [a for a in problem.atom_locations() if 0.0 < a < 1.0]
        locations = [0.0] + interior + [1.0]
    out = []
    for a in locations:
        dF = _one_sided(flux, y, problem, f, a, "right") - _one_sided(flux, y, problem, f, a, "left")
        dM = _one_sided(moment, y, problem, f, a, "right") - _one_sided(moment, y, problem, f, a, "left")
        ya, dya = float(y(a)), float(y(a, 1))
        r_val, r_der = dF, -dM
        for at in problem.h.atoms_at(a):
            if at.order == 0:
                r_val += at.weight * ya
            else:
                r_val -= at.weight * dya
                r_der -= at.weight * ya
        for at in problem.q.atoms_at(a):
            r_der += at.weight * dya
        if a in (0.0, 1.0):
            basis = problem.subspace.free_basis(int(a))
            for j in range(basis.shape[1]):
                out.append({"location": a, "condition": f"endpoint direction {j}",
                            "direction": basis[:, j].tolist(),
                            "residual": float(basis[0, j] * r_val + basis[1, j] * r_der)})
        else:
            out.append({"location": a, "condition": "value (z) jump", "residual": r_val})
            out.append({"location": a, "condition": "slope (z') jump", "residual": r_der})
    return out


def continuity_jumps(y: FiniteElementFunction, a: float) -> dict:
    """Raw jumps of y, y', y'' across a node (the first two vanish identically)."""
    return {f"d{k}": float(y(a, k, "right") - y(a, k, "left")) for k in range(3)}
