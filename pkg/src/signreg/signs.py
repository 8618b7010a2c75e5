"""Sign-change counting, the non-decrease verdict, and the interlacing certificate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ChainSearchFailed, NotProposition11Shape
from .fem import Factorization, FiniteElementFunction, discretize, sample_grid, solve
from .problem import Problem
from .recovery import flux, moment

ZERO_TOL = 1e-11
CERT_TOL = 1e-9
CANDIDATES_PER_ELEMENT = 8
MAX_RETRIES = 3


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Continuous piecewise-linear function through ``(points, values)``."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.array(self.points, dtype=float)
        v = np.array(self.values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise ValueError("need at least two (point, value) pairs of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("points must be strictly increasing")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        return np.interp(x, self.points, self.values)

    @property
    def breakpoints(self) -> np.ndarray:
        return self.points

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SampledFunction":
        return cls(d["points"], d["values"])


@dataclass(frozen=True)
class SignCount:
    count: int
    all_zero: bool

    def __int__(self):
        return self.count


def _values(f) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, SampledFunction) else f, dtype=float)


def default_zero_tol(values) -> float:
    v = np.asarray(values, dtype=float)
    return ZERO_TOL * float(np.max(np.abs(v))) if v.size else 0.0


def sign_count(f, zero_tol: Optional[float] = None) -> SignCount:
    """S^- count of a value sequence together with the all-zero flag."""
    v = _values(f)
    tol = default_zero_tol(v) if zero_tol is None else zero_tol
    count, nonzero = kernels.alternations(v, tol)
    return SignCount(count, nonzero == 0)


def sign_changes(f, zero_tol: Optional[float] = None) -> int:
    """Strict sign alternations after discarding entries with ``|v| <= zero_tol``.

    >>> sign_changes([1, -2, 0, 3])
    2
    """
    return sign_count(f, zero_tol).count


def alternation_brackets(points, values, zero_tol: Optional[float] = None) -> list:
    """``[a, b]`` grid pairs between which the (nonzero) sign flips."""
    v = np.asarray(values, dtype=float)
    tol = default_zero_tol(v) if zero_tol is None else zero_tol
    idx = np.flatnonzero(np.abs(v) > tol)
    s = np.sign(v[idx])
    flips = np.flatnonzero(s[1:] != s[:-1])
    x = np.asarray(points, dtype=float)
    return [[float(x[idx[k]]), float(x[idx[k + 1]])] for k in flips]


def random_sign_pattern(n: int, seed: int) -> SampledFunction:
    """Piecewise-linear load with exactly ``n`` interior zeros, unit sup-norm.

    Zeros are uniform on (0, 1); each lobe peaks at its midpoint with a random
    height in [1/2, 1] and alternating sign, starting positive.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    zeros = np.sort(rng.uniform(0.0, 1.0, n))
    while n > 1 and np.min(np.diff(zeros)) < 1e-9:  # practically never
        zeros = np.sort(rng.uniform(0.0, 1.0, n))
    heights = rng.uniform(0.5, 1.0, n + 1)
    ends = rng.uniform(0.1, 0.5, 2)
    knots = np.concatenate([[0.0], zeros, [1.0]])
    signs = (-1.0) ** np.arange(n + 1)
    pts, vals = [0.0], [signs[0] * heights[0] * ends[0]]
    for j in range(n + 1):
        pts.append(0.5 * (knots[j] + knots[j + 1]))
        vals.append(signs[j] * heights[j])
        if j < n:
            pts.append(knots[j + 1])
            vals.append(0.0)
    pts.append(1.0)
    vals.append(signs[n] * heights[n] * ends[1])
    vals = np.array(vals)
    return SampledFunction(np.array(pts), vals / np.max(np.abs(vals)))


def bump(center: float, half_width: float) -> SampledFunction:
    """Nonnegative hat of unit height centred at ``center`` (clipped to [0, 1])."""
    pts = [center - half_width, center, center + half_width]
    vals = [0.0, 1.0, 0.0]
    keep = [(x, v) for x, v in zip(pts, vals) if 0.0 <= x <= 1.0]
    if keep[0][0] > 0.0:
        keep.insert(0, (0.0, 0.0))
    if keep[-1][0] < 1.0:
        keep.append((1.0, 0.0))
    x, v = zip(*keep)
    return SampledFunction(np.array(x), np.array(v))


@dataclass
class NondecreaseReport:
    n_f: int
    n_y: int
    passed: bool
    alternation_points: dict
    zero_tol: dict = field(default_factory=dict)
    all_zero: bool = False

    def to_dict(self) -> dict:
        return {"n_f": self.n_f, "n_y": self.n_y, "pass": self.passed,
                "alternation_points": self.alternation_points, "zero_tol": self.zero_tol,
                "all_zero": self.all_zero}


def verify_nondecrease(fact: Factorization, f: SampledFunction, eval_grid=None,
                       y: Optional[FiniteElementFunction] = None) -> NondecreaseReport:
    """Solve ``L y = f`` and compare sign counts of y (on ``eval_grid``) and f."""
    y = solve(fact, f) if y is None else y
    grid = sample_grid(fact.mesh) if eval_grid is None else np.asarray(eval_grid, dtype=float)
    yv = y(grid)
    tol_f, tol_y = default_zero_tol(f.values), default_zero_tol(yv)
    cf, cy = sign_count(f, tol_f), sign_count(yv, tol_y)
    alt = {"f": alternation_brackets(f.points, f.values, tol_f),
           "y": alternation_brackets(grid, yv, tol_y)}
    return NondecreaseReport(cf.count, cy.count, cy.count <= cf.count, alt,
                             {"f": tol_f, "y": tol_y}, cf.all_zero)


# ---------------------------------------------------------------------------
# interlacing certificate
# ---------------------------------------------------------------------------

QUANTITIES = ("y", "dy", "M", "dM", "f")


def _quantity(y: FiniteElementFunction, problem: Problem, f, name: str, x, side="right"):
    """y, y', p y'', (p y'')' or f at ``x``.

    The moment and its derivative are recovered one-sided values (see
    :mod:`signreg.recovery`); raw y''' is only first-order accurate.
    """
    if name == "y":
        return y(x, 0, side)
    if name == "dy":
        return y(x, 1, side)
    if name == "M":
        return moment(y, problem, f, x, side)
    if name == "dM":
        return flux(y, problem, f, x, side)
    if name == "f":
        return f(x)
    raise ValueError(name)


@dataclass
class ChainPoint:
    level: int
    index: int
    point: float
    quantity: str
    value: float
    side: str
    sign: int  # required sign of ``value``
    relation: str

    def to_dict(self) -> dict:
        return {"level": self.level, "index": self.index, "point": self.point,
                "quantity": self.quantity, "value": self.value, "side": self.side,
                "sign": self.sign, "relation": self.relation}


@dataclass
class Certificate:
    n: int
    m: Optional[int]
    anchors: list  # level 0: sign points of y
    chains: dict  # level -> list of ChainPoint ordered by index
    scales: dict
    cert_tol: float
    n_elements: int
    boundary: dict = field(default_factory=dict)
    attempts: int = 1

    @property
    def f_sign_changes_witnessed(self) -> int:
        return max(len(self.chains.get(4, [])) - 1, 0)

    def points(self, level: int) -> np.ndarray:
        src = self.anchors if level == 0 else self.chains[level]
        return np.array([c.point for c in src])

    def to_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "cert_tol": self.cert_tol, "n_elements": self.n_elements,
            "attempts": self.attempts, "scales": {str(k): v for k, v in self.scales.items()},
            "boundary": self.boundary,
            "levels": {"0": [c.to_dict() for c in self.anchors]}
            | {str(k): [c.to_dict() for c in v] for k, v in self.chains.items()},
        }


def proposition11_parameters(problem: Problem) -> tuple:
    """(alpha, beta, gamma) if ``problem`` has the clamped-free-with-springs shape."""
    if not problem.subspace.is_full:
        raise NotProposition11Shape("essential boundary conditions are not allowed")
    q, h = problem.q, problem.h
    if q.smooth is not None or h.smooth is not None:
        raise NotProposition11Shape("q and h must be purely atomic")
    qa = {(a.location, a.order): a.weight for a in q.atoms}
    ha = {(a.location, a.order): a.weight for a in h.atoms}
    if set(qa) != {(0.0, 0), (1.0, 0)} or set(ha) != {(0.0, 0)}:
        raise NotProposition11Shape("need q = beta*delta_0 + gamma*delta_1 and h = alpha*delta_0")
    alpha, beta, gamma = ha[(0.0, 0)], qa[(0.0, 0)], qa[(1.0, 0)]
    if min(alpha, beta, gamma) <= 0:
        raise NotProposition11Shape("alpha, beta, gamma must be positive")
    return alpha, beta, gamma


def candidate_grid(mesh, per_element: int = CANDIDATES_PER_ELEMENT) -> np.ndarray:
    """Element-interior points (no nodes), so one-sided derivatives are unambiguous."""
    t = (np.arange(per_element) + 0.5) / per_element
    return (mesh.nodes[:-1, None] + mesh.lengths[:, None] * t[None, :]).ravel()


class _Chase:
    def __init__(self, y, problem, f, mesh, cert_tol):
        self.y, self.problem, self.f = y, problem, f
        self.x = candidate_grid(mesh)
        self.table = {q: np.asarray(_quantity(y, problem, f, q, self.x), dtype=float)
                      for q in QUANTITIES}
        self.scales = {q: float(np.max(np.abs(v))) or 1.0 for q, v in self.table.items()}
        self.cert_tol = cert_tol

    def find(self, quantity, lo, hi, sign, level, index, relation):
        """Point in (lo, hi) maximizing ``sign * quantity``; must beat the margin.

        Candidates are the precomputed grid plus a few interior points of the
        interval itself, so short intervals next to an endpoint are searchable.
        """
        mask = (self.x > lo) & (self.x < hi)
        extra = lo + (hi - lo) * (np.arange(CANDIDATES_PER_ELEMENT) + 0.5) / CANDIDATES_PER_ELEMENT
        x = np.concatenate([self.x[mask], extra])
        vals = np.concatenate([self.table[quantity][mask],
                               np.asarray(_quantity(self.y, self.problem, self.f, quantity, extra), dtype=float)])
        v = sign * vals
        k = int(np.argmax(v))
        if not (v[k] > self.cert_tol * self.scales[quantity] and lo < x[k] < hi):
            raise ChainSearchFailed(
                f"level {level} index {index}: no strict {relation} in ({lo:.6g}, {hi:.6g})")
        return ChainPoint(level, index, float(x[k]), quantity, float(vals[k]), "right", int(sign), relation)


def _sign(v) -> int:
    return 1 if v > 0 else -1


def _chase(y: FiniteElementFunction, f, fact: Factorization, cert_tol: float, eval_grid=None) -> Certificate:
    problem = fact.problem
    alpha = proposition11_parameters(problem)[0]
    mesh = fact.mesh
    ch = _Chase(y, problem, f, mesh, cert_tol)

    # level 0: one extreme point of y per maximal sign run on the candidate grid
    yv = ch.table["y"]
    tol = default_zero_tol(yv)
    nz = np.flatnonzero(np.abs(yv) > max(tol, cert_tol * ch.scales["y"]))
    runs = np.split(nz, np.flatnonzero(np.diff(np.sign(yv[nz])) != 0) + 1) if nz.size else []
    anchors = []
    for r, idx in enumerate(runs):
        k = idx[np.argmax(np.abs(yv[idx]))]
        anchors.append(ChainPoint(0, r + 1, float(ch.x[k]), "y", float(yv[k]), "right",
                                  _sign(yv[k]), "alternating y"))
    n = len(anchors) - 1
    if n < 1:
        return Certificate(max(n, 0), None, anchors, {}, ch.scales, cert_tol, mesh.n_elements)
    xi = {a.index: a.point for a in anchors}
    sy = {a.index: a.sign for a in anchors}
    boundary = {}

    # level 1: y'(xi_{1,k}) y(xi_{k+1}) > 0
    lv1 = {}
    for k in range(1, n + 1):
        lv1[k] = ch.find("dy", xi[k], xi[k + 1], sy[k + 1], 1, k, "dy*y(xi_k+1)>0")
    try:
        lv1[0] = ch.find("dy", 0.0, xi[1], sy[1], 1, 0, "dy*y(xi_1)>0")
        m = 0
    except ChainSearchFailed:
        # boundary branch: (py'')'(0) = -alpha y(0) must oppose y(xi_1)
        dm0 = float(_quantity(y, problem, f, "dM", 0.0)[0])
        if not -sy[1] * dm0 > cert_tol * ch.scales["dM"]:
            raise ChainSearchFailed("neither a level-1 point in (0, xi_1) nor a strict boundary sign at 0")
        m = 1
        boundary["dM(0)"] = {"value": dm0, "sign": -sy[1], "alpha_y0": -alpha * float(y(0.0))}
    s1 = {k: c.sign for k, c in lv1.items()}

    # level 2: py'' follows the sign of y' at the next level-1 point
    lv2 = {}
    lv2[m - 1] = ch.find("M", 0.0, lv1[m].point, s1[m], 2, m - 1, "M*dy(xi_1,m)>0")
    for k in range(m, n):
        lv2[k] = ch.find("M", lv1[k].point, lv1[k + 1].point, s1[k + 1], 2, k, "M*dy(xi_1,k+1)>0")
    lv2[n] = ch.find("M", lv1[n].point, 1.0, -s1[n], 2, n, "M*dy(xi_1,n)<0")
    s2 = {k: c.sign for k, c in lv2.items()}

    # level 3: (py'')' follows the sign of py'' at the next level-2 point
    lv3 = {}
    if m == 1:
        lv3[-1] = ch.find("dM", 0.0, lv2[0].point, s2[0], 3, -1, "dM*M(xi_2,0)>0")
    for k in range(m - 1, n):
        lv3[k] = ch.find("dM", lv2[k].point, lv2[k + 1].point, s2[k + 1], 3, k, "dM*M(xi_2,k+1)>0")
    s3 = {k: c.sign for k, c in lv3.items()}

    # level 4: f follows the sign of (py'')' at the next level-3 point
    lv4 = {}
    for k in range(-1, n - 1):
        lv4[k] = ch.find("f", lv3[k].point, lv3[k + 1].point, s3[k + 1], 4, k, "f*dM(xi_3,k+1)>0")
    lv4[n - 1] = ch.find("f", lv3[n - 1].point, 1.0, -s3[n - 1], 4, n - 1, "f*dM(xi_3,n-1)<0")

    chains = {lvl: [d[k] for k in sorted(d)] for lvl, d in ((1, lv1), (2, lv2), (3, lv3), (4, lv4))}
    return Certificate(n, m, anchors, chains, ch.scales, cert_tol, mesh.n_elements, boundary)


def sign_chain_certificate(fact: Factorization, f, cert_tol: float = CERT_TOL,
                           max_retries: int = MAX_RETRIES) -> tuple:
    """Build the interlacing chains for ``y = L^{-1} f``.

    On :class:`ChainSearchFailed` the mesh is refined by a factor of two, up to
    ``max_retries`` times.  Returns ``(certificate, y, factorization_used)``.
    """
    proposition11_parameters(fact.problem)
    last = None
    for attempt in range(max_retries + 1):
        y = solve(fact, f)
        try:
            cert = _chase(y, f, fact, cert_tol)
            cert.attempts = attempt + 1
            return cert, y, fact
        except ChainSearchFailed as exc:
            last = exc
            fact = discretize(fact.problem, 2 * fact.mesh.n_elements)
    raise ChainSearchFailed(f"{last} (after {max_retries} refinements)")


def check_certificate(cert: Certificate, y: FiniteElementFunction, f, problem: Problem) -> list:
    """Re-evaluate every recorded inequality from ``y`` and ``f``.

    Independent of the search: signs, margins, open-interval membership and
    the sign propagation between levels are all recomputed.  Returns a list of
    failure messages (empty when the certificate holds).
    """
    bad = []
    tol = cert.cert_tol

    def q(name, x):
        return float(np.ravel(_quantity(y, problem, f, name, x))[0])

    def strict(v, sign, scale, what):
        if not sign * v > tol * scale:
            bad.append(f"{what}: value {v:.3e} lacks sign {sign:+d} with margin {tol * scale:.3e}")

    for a in cert.anchors:
        strict(q("y", a.point), a.sign, cert.scales["y"], f"y at {a.point}")
    for k in range(len(cert.anchors) - 1):
        if cert.anchors[k].sign == cert.anchors[k + 1].sign:
            bad.append(f"anchors {k + 1}, {k + 2} do not alternate")
    if cert.n < 1:
        return bad
    for lvl, pts in cert.chains.items():
        xs = [c.point for c in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])) or xs[0] <= 0 or xs[-1] >= 1:
            bad.append(f"level {lvl} points not strictly increasing inside (0, 1)")
        for c in pts:
            strict(q(c.quantity, c.point), c.sign, cert.scales[c.quantity], f"level {lvl} index {c.index}")
    # the required signs must follow from the previous level as in the chase
    anchors = {i + 1: a for i, a in enumerate(cert.anchors)}
    n, m = cert.n, cert.m
    lv = {lvl: {c.index: c for c in pts} for lvl, pts in cert.chains.items()}
    expect = []
    for k in range(1, n + 1):
        expect.append((1, k, anchors[k + 1].sign, (anchors[k].point, anchors[k + 1].point)))
    if m == 0:
        expect.append((1, 0, anchors[1].sign, (0.0, anchors[1].point)))
    else:
        v = q("dM", 0.0)
        strict(v, -anchors[1].sign, cert.scales["dM"], "boundary (py'')'(0)")
    expect.append((2, m - 1, lv[1][m].sign, (0.0, lv[1][m].point)))
    for k in range(m, n):
        expect.append((2, k, lv[1][k + 1].sign, (lv[1][k].point, lv[1][k + 1].point)))
    expect.append((2, n, -lv[1][n].sign, (lv[1][n].point, 1.0)))
    if m == 1:
        expect.append((3, -1, lv[2][0].sign, (0.0, lv[2][0].point)))
    for k in range(m - 1, n):
        expect.append((3, k, lv[2][k + 1].sign, (lv[2][k].point, lv[2][k + 1].point)))
    for k in range(-1, n - 1):
        expect.append((4, k, lv[3][k + 1].sign, (lv[3][k].point, lv[3][k + 1].point)))
    expect.append((4, n - 1, -lv[3][n - 1].sign, (lv[3][n - 1].point, 1.0)))
    for lvl, k, sign, (lo, hi) in expect:
        c = lv.get(lvl, {}).get(k)
        if c is None:
            bad.append(f"level {lvl} index {k} missing")
            continue
        if c.sign != sign:
            bad.append(f"level {lvl} index {k}: sign {c.sign:+d}, chase requires {sign:+d}")
        if not lo < c.point < hi:
            bad.append(f"level {lvl} index {k}: {c.point} outside ({lo}, {hi})")
    f_signs = [c.sign for c in sorted(cert.chains[4], key=lambda c: c.point)]
    if any(a == b for a, b in zip(f_signs, f_signs[1:])) or len(f_signs) != n + 1:
        bad.append("level-4 signs of f do not alternate n + 1 times")
    return bad
