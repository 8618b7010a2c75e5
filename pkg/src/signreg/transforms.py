"""The two conjugation reductions: change of variable by a Sturm weight, and a positive multiplier.

Variable change.  With ``S`` the second-order form ``int p y' z' + <q, y z>``,
``sigma = omega S^{-1}(delta_0 + delta_1)`` normalized to unit integral and
``tau(x) = int_0^x sigma``, the substitution ``V y = y o tau`` turns
``int p y'' z'' + <q, y' z'> + alpha y(0) z(0)`` into
``int p^ y'' z'' + alpha y(0) z(0) + beta y'(0) z'(0) + gamma y'(1) z'(1)``
with ``p^ o tau = p sigma^3``, ``beta = omega sigma(0)``, ``gamma = omega sigma(1)``.

Multiplier.  With ``sigma = L^{-1} delta_0`` and ``V y = sigma y`` the form
becomes ``int p^ y'' z'' + <q^, y' z'> + alpha y(0) z(0)`` with
``p^ = p sigma^2``, ``alpha = sigma(0)`` and::

    <q^, w> = <q, sigma^2 w> + int 2p [2 sigma'^2 - sigma sigma''] w + int p (sigma^2)' w'

The last integral acts on ``w'``; integrating it by parts keeps q^ inside the
representable class (smooth part plus order-0 atoms at 0, 1 and at jumps of p).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import IllegalAtomOrder, ShapeMismatch, SigmaNotPositive, SNotPositive
from . import kernels
from .fem import (
    PIVOT_TOL, DiscreteOperator, FiniteElementFunction, Mesh, PointLoad, assemble, band_matvec,
    build_mesh, discretize, element_matrices, hermite_interpolant, node_matrices, quadrature_form,
    sample_grid, solve,
)
from .problem import (
    AtomicTerm, GeneralizedCoefficient, Problem, ScalarCoefficient, SecondOrderProblem, canonicalize,
    proposition11, validate_problem,
)

BISECTION_TOL = 1e-13
OVERSAMPLE = 8


# ---------------------------------------------------------------------------
# piecewise-polynomial helpers
# ---------------------------------------------------------------------------

def fe_coefficient(u: FiniteElementFunction) -> ScalarCoefficient:
    """The finite element function as a piecewise cubic coefficient on its mesh."""
    return ScalarCoefficient.piecewise(u.mesh.nodes, list(u.local_polynomials()), local=True)


def _combine(bp, terms) -> ScalarCoefficient:
    """``sum scale * prod(factors)`` as a piecewise polynomial on ``bp``."""
    pieces = [np.zeros(1) for _ in range(len(bp) - 1)]
    for scale, factors in terms:
        local = [f.local_pieces(bp) for f in factors]
        for i in range(len(pieces)):
            c = np.array([float(scale)])
            for lp in local:
                c = P.polymul(c, lp[i])
            pieces[i] = P.polyadd(pieces[i], c)
    return ScalarCoefficient.piecewise(bp, pieces, local=True)


def _breakpoints(*arrays) -> np.ndarray:
    x = np.unique(np.concatenate([np.asarray(a, dtype=float) for a in arrays]))
    keep = np.concatenate([[True], np.diff(x) > 1e-14])
    return x[keep]


# ---------------------------------------------------------------------------
# Sturm weight and the change of variable
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SturmWeight:
    """sigma (continuous piecewise cubic), omega and tau = int_0^x sigma."""

    sigma: ScalarCoefficient
    omega: float
    tau: ScalarCoefficient
    s_problem: SecondOrderProblem
    sigma_min: float
    mesh: Mesh

    def tau_inverse(self, u) -> np.ndarray:
        """Vectorized bisection for ``tau(x) = u`` to ``BISECTION_TOL``."""
        u = np.asarray(u, dtype=float)
        lo, hi = np.zeros_like(u), np.ones_like(u)
        while np.max(hi - lo, initial=0.0) > BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            below = self.tau(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def integral(self) -> float:
        return float(self.tau(1.0, 0, "left"))


def _second_order_surrogate(s: SecondOrderProblem) -> Problem:
    # int p y' z' + <q, y z> is the (q, h) part of a fourth-order form
    for a in s.q.atoms:
        if a.order != 0:
            raise IllegalAtomOrder("the second-order coefficient q admits order-0 atoms only")
    return Problem(ScalarCoefficient.constant(1.0), GeneralizedCoefficient(s.p), s.q)


def _c0_indices(n_elements: int) -> np.ndarray:
    """Global dofs of each element's (v_left, s_left, v_right, s_right).

    Values are shared, slopes belong to one element side; the ordering
    v_0, s_0+, s_1-, v_1, s_1+, ... keeps every element inside bandwidth 3.
    """
    e = np.arange(n_elements)
    return np.stack([3 * e, 3 * e + 1, 3 * e + 3, 3 * e + 2], axis=1)


def sturm_weight(s_problem: SecondOrderProblem, mesh) -> SturmWeight:
    """``sigma = omega S^{-1}(delta_0 + delta_1)`` with unit integral, and ``tau``.

    ``mesh`` is a :class:`Mesh` or an element count.  S is discretized with
    continuous piecewise cubics, so sigma' may jump at atoms of q and at
    breakpoints of p.
    """
    surrogate = _second_order_surrogate(s_problem)
    if not isinstance(mesh, Mesh):
        mesh = build_mesh(surrogate, int(mesh))
    terms = ("q", "h")
    elem = element_matrices(surrogate, mesh, terms=terms)
    ne = mesh.n_elements
    idx = _c0_indices(ne)
    n = 3 * ne + 1
    ab = np.zeros((4, n))
    for i in range(4):
        for j in range(4):
            d = idx[:, i] - idx[:, j]
            low = d >= 0
            np.add.at(ab, (d[low], idx[low, j]), elem[low, i, j])
    for node, m in node_matrices(surrogate, mesh, terms=terms).items():
        ab[0, 3 * node] += m[0, 0]
    scale = float(np.max(np.abs(ab[0])))
    lb, d, fail = kernels.ldlt_band(ab, PIVOT_TOL * scale)
    if fail >= 0:
        raise SNotPositive(f"second-order form is not positive definite (pivot {fail} is {d[fail]:.3e})")
    rhs = np.zeros(n)
    rhs[0] = rhs[-1] = 1.0
    x = kernels.ldlt_solve(lb, d, rhs)
    r = (rhs.astype(np.longdouble) - band_matvec(ab.astype(np.longdouble), x.astype(np.longdouble)))
    x = x + kernels.ldlt_solve(lb, d, r.astype(float))
    # local cubic coefficients in x - node_e
    loc_dofs = x[idx]
    h = mesh.lengths
    v0, s0, v1, s1 = loc_dofs.T
    c2 = (3 * (v1 - v0) / h - 2 * s0 - s1) / h
    c3 = (2 * (v0 - v1) / h + s0 + s1) / h**2
    loc = np.stack([v0, s0, c2, c3], axis=1)
    k = np.arange(1, 5)
    total = float(np.sum(loc / k * h[:, None] ** k))
    if not total > 0:
        raise SigmaNotPositive(f"integral of S^-1(delta_0 + delta_1) is {total:.3e}")
    omega = 1.0 / total
    loc = omega * loc
    sigma = ScalarCoefficient.piecewise(mesh.nodes, list(loc), local=True)
    smin = float(np.min(sigma(sample_grid(mesh, 16))))
    if not smin > 0:
        raise SigmaNotPositive(f"sigma attains {smin:.3e} <= 0")
    # tau is the exact antiderivative: quartic on each element
    quart = np.zeros((ne, 5))
    quart[:, 1:] = loc / k
    steps = np.sum(quart[:, 1:] * h[:, None] ** k, axis=1)
    quart[:, 0] = np.concatenate([[0.0], np.cumsum(steps)[:-1]])
    tau = ScalarCoefficient.piecewise(mesh.nodes, list(quart), local=True)
    return SturmWeight(sigma, omega, tau, s_problem, smin, mesh)


@dataclass
class TransformResult:
    kind: str
    problem: Problem
    original: Problem
    params: dict
    weight: object = None  # SturmWeight or sigma
    parts: dict = field(default_factory=dict)

    @property
    def sigma(self):
        return self.weight.sigma if isinstance(self.weight, SturmWeight) else self.weight

    def vy_dofs(self, y: FiniteElementFunction, mesh: Mesh) -> np.ndarray:
        """Nodal (value, slope) of ``V y`` on ``mesh``."""
        x = mesh.nodes
        if self.kind == "variable_change":
            w = self.weight
            t = w.tau(x)
            t[0], t[-1] = 0.0, 1.0
            return np.stack([y(t), y(t, 1) * w.sigma(x)], axis=1)
        s = self.sigma
        return np.stack([s(x) * y(x), s(x, 1) * y(x) + s(x) * y(x, 1)], axis=1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


def prop21_alpha(problem: Problem) -> float:
    """alpha of ``int p y'' z'' + <q, y' z'> + alpha y(0) z(0)`` on the full space."""
    if not problem.subspace.is_full:
        raise ShapeMismatch("the full space W_2^2 is required")
    h = problem.h
    if h.smooth is not None or len(h.atoms) != 1 or h.atoms[0].location != 0.0 or h.atoms[0].order != 0:
        raise ShapeMismatch("h must be a single atom alpha * delta_0")
    alpha = h.atoms[0].weight
    if not alpha > 0:
        raise ShapeMismatch("alpha must be positive")
    return alpha


def _same(a, b) -> bool:
    return a is b or (a is not None and b is not None and a.to_dict() == b.to_dict())


def variable_change(w: SturmWeight, problem: Problem, oversample: int = OVERSAMPLE) -> TransformResult:
    """Conjugate by ``y -> y o tau``; p^ is sampled on ``oversample`` x the weight mesh."""
    alpha = prop21_alpha(problem)
    if not (_same(problem.p, w.s_problem.p) and problem.q.to_dict() == w.s_problem.q.to_dict()):
        raise ShapeMismatch("the Sturm weight was built from different p, q")
    u = np.linspace(0.0, 1.0, oversample * w.mesh.n_elements + 1)
    x = w.tau_inverse(u)
    x[0], x[-1] = 0.0, 1.0
    p_hat = ScalarCoefficient.sampled(u, problem.p(x) * w.sigma(x) ** 3)
    beta, gamma = w.omega * float(w.sigma(0.0)), w.omega * float(w.sigma(1.0))
    out = proposition11(alpha, beta, gamma, p=p_hat)
    validate_problem(out)
    params = {"omega": w.omega, "alpha": alpha, "beta": beta, "gamma": gamma, "sigma_min": w.sigma_min,
              "sigma_integral": w.integral(), "tau_1": float(w.tau(1.0))}
    return TransformResult("variable_change", out, problem, params, w)


# ---------------------------------------------------------------------------
# multiplier
# ---------------------------------------------------------------------------

def multiplier_weight(fact) -> FiniteElementFunction:
    """``sigma = L^{-1} delta_0`` with a uniform positivity check."""
    if not fact.problem.subspace.is_full:
        raise ShapeMismatch("the multiplier needs the full space (no essential conditions)")
    sigma = solve(fact, PointLoad(0.0))
    smin = float(np.min(sigma(sample_grid(fact.mesh, 16))))
    if not smin > 0:
        raise SigmaNotPositive(f"L^-1 delta_0 attains {smin:.3e} <= 0")
    return sigma


def multiplier_transform(sigma: FiniteElementFunction, problem: Problem) -> TransformResult:
    """Conjugate by ``y -> sigma y``; q^ is assembled exactly as a piecewise polynomial."""
    if not problem.subspace.is_full:
        raise ShapeMismatch("the multiplier needs the full space (no essential conditions)")
    p, q = problem.p, problem.q
    S = fe_coefficient(sigma)
    S1 = S.derivative()
    S2 = S1.derivative()
    dp = p.derivative()
    extra = [q.smooth.breakpoints] if q.smooth is not None else []
    bp = _breakpoints(sigma.mesh.nodes, p.breakpoints, *extra)
    p_hat = _combine(bp, [(1.0, [p, S, S])])
    smooth_terms = [(2.0, [p, S1, S1]), (-4.0, [p, S, S2]), (-2.0, [dp, S, S1])]
    if q.smooth is not None:
        smooth_terms.append((1.0, [q.smooth, S, S]))
    q_smooth = _combine(bp, smooth_terms)

    def g(x, side="right"):  # (sigma^2)'
        return 2.0 * float(sigma(x, 0, side)) * float(sigma(x, 1, side))

    atoms = [AtomicTerm(a.location, a.weight * float(sigma(a.location)) ** 2, 0) for a in q.atoms]
    atoms.append(AtomicTerm(0.0, -float(p(0.0)) * g(0.0), 0))
    atoms.append(AtomicTerm(1.0, float(p(1.0, 0, "left")) * g(1.0, "left"), 0))
    for b in p.breakpoints[1:-1]:
        jump = float(p(b, 0, "right") - p(b, 0, "left"))
        if jump != 0.0:
            atoms.append(AtomicTerm(float(b), -jump * g(b), 0))
    q_hat = canonicalize(GeneralizedCoefficient(q_smooth, tuple(atoms)))
    alpha = float(sigma(0.0))
    h_hat = GeneralizedCoefficient(None, (AtomicTerm(0.0, alpha, 0),))
    out = Problem(p_hat, q_hat, h_hat)
    validate_problem(out)
    # the two raw integrands of the formula, before integration by parts
    parts = {
        "mass": _combine(bp, [(4.0, [p, S1, S1]), (-2.0, [p, S, S2])]),
        "flux": _combine(bp, [(2.0, [p, S, S1])]),
    }
    smin = float(np.min(sigma(sample_grid(sigma.mesh, 16))))
    params = {"alpha": alpha, "sigma_min": smin}
    return TransformResult("multiplier", out, problem, params, sigma, parts)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def default_probes(mesh: Mesh) -> list:
    """Global cubics (exact in the Hermite space) with generic boundary data."""
    cubics = [(1.0, 0.5, -0.3, 0.2), (0.3, -1.0, 2.0, -1.2), (-0.5, 0.8, 0.6, -0.9), (0.2, 0.0, -1.0, 1.0)]
    out = []
    for c in cubics:
        dc = P.polyder(c)
        out.append(hermite_interpolant(mesh, lambda x, c=c: P.polyval(x, c), lambda x, dc=dc: P.polyval(x, dc)))
    return out


def verify_conjugation(original: DiscreteOperator, transform: TransformResult,
                       probes: Optional[Sequence[FiniteElementFunction]] = None) -> float:
    """``max |<L Vy, Vy> - <L^ y, y>| / |<L^ y, y>|`` over the probes.

    ``Vy`` is Hermite-interpolated onto the original mesh.  Both forms are
    evaluated by quadrature (see :func:`signreg.fem.quadrature_form`).
    """
    if probes is None:
        probes = default_probes(Mesh.uniform(original.mesh.n_elements))
    worst = 0.0
    for y in probes:
        vy = FiniteElementFunction(original.mesh, transform.vy_dofs(y, original.mesh))
        lhs = quadrature_form(original.problem, vy)
        rhs = quadrature_form(transform.problem, y)
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny))
    return worst


def conjugation_study(problem: Problem, kind: str, levels: Sequence[int]) -> dict:
    """Residual of :func:`verify_conjugation` across mesh levels, with observed orders."""
    residuals, extras = [], {}
    for n in levels:
        if kind == "variable_change":
            w = sturm_weight(SecondOrderProblem(problem.p, problem.q), n)
            t = variable_change(w, problem)
            op = assemble(problem, build_mesh(problem, n))
        elif kind == "multiplier":
            fact = discretize(problem, n)
            t = multiplier_transform(multiplier_weight(fact), problem)
            op = fact.operator
        else:
            raise ValueError(f"unknown transform kind {kind!r}")
        residuals.append(verify_conjugation(op, t))
        extras = t.to_dict()
    r = np.asarray(residuals)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log2(r[:-1] / r[1:]).tolist()
    return {"levels": list(levels), "residuals": residuals, "orders": orders, "transform": extras}
