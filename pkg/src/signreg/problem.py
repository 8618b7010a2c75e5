"""Coefficient class and boundary subspaces for the fourth-order form

    <Ly, z> = int p y'' z'' dx + <q, y' z'> + <h, y z>

on [0, 1].  ``p`` is a uniformly positive scalar coefficient; ``q`` and ``h``
are a smooth part plus finitely many point atoms (Dirac masses, and for ``h``
also Dirac derivatives).  The trial space is W_2^2 cut down by up to two
homogeneous functionals ``a*y(e) + b*y'(e)`` per endpoint ``e``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import (
    DegenerateBoundaryFunctional,
    IllegalAtomOrder,
    InvalidCoefficient,
    NonPositiveLeadingCoefficient,
)

LOCATION_TOL = 1e-14


def shift_poly(coef, delta):
    """Re-expand ``sum c_k t^k`` around ``t = delta``: returns d with sum d_k s^k, t = s + delta."""
    coef = np.asarray(coef, dtype=float)
    if delta == 0.0 or coef.size <= 1:
        return coef.copy()
    out = np.array([coef[-1]])
    for c in coef[-2::-1]:
        out = P.polymul(out, [delta, 1.0])
        out[0] += c
    return out


def _trim(coef):
    coef = np.atleast_1d(np.asarray(coef, dtype=float))
    return coef if coef.size else np.zeros(1)


@dataclass(frozen=True, eq=False)
class ScalarCoefficient:
    """Piecewise polynomial on [0, 1].

    Each piece is stored by ascending coefficients in the local variable
    ``x - breakpoints[i]``.  ``kind`` records how the coefficient was
    specified ("constant", "piecewise" or "sampled"); sampled data are the
    linear interpolant of their samples.
    """

    kind: str
    breakpoints: np.ndarray
    pieces: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise InvalidCoefficient("need at least two breakpoints")
        if not np.all(np.isfinite(bp)) or np.any(np.diff(bp) <= 0):
            raise InvalidCoefficient("breakpoints must be finite and strictly increasing")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise InvalidCoefficient("breakpoints must start at 0 and end at 1")
        pieces = tuple(_trim(c) for c in self.pieces)
        if len(pieces) != bp.size - 1:
            raise InvalidCoefficient("one polynomial per interval between breakpoints is required")
        if not all(np.all(np.isfinite(c)) for c in pieces):
            raise InvalidCoefficient("non-finite polynomial coefficient")
        width = max(c.size for c in pieces)
        table = np.zeros((len(pieces), width))
        for i, c in enumerate(pieces):
            table[i, : c.size] = c
        bp.setflags(write=False)
        table.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "_table", table)

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, value: float) -> "ScalarCoefficient":
        return cls("constant", np.array([0.0, 1.0]), (np.array([float(value)]),))

    @classmethod
    def piecewise(cls, breakpoints, coefficients, local: bool = False) -> "ScalarCoefficient":
        """Pieces given by ascending coefficients in ``x`` (or in ``x - b_i`` when ``local``)."""
        bp = np.asarray(breakpoints, dtype=float)
        pieces = []
        for i, c in enumerate(coefficients):
            c = _trim(c)
            pieces.append(c if local else shift_poly(c, bp[i]))
        return cls("piecewise", bp, tuple(pieces))

    @classmethod
    def sampled(cls, points, values) -> "ScalarCoefficient":
        x = np.asarray(points, dtype=float)
        v = np.asarray(values, dtype=float)
        if x.shape != v.shape or x.ndim != 1:
            raise InvalidCoefficient("sample points and values must be 1-D of equal length")
        if x.size < 2:
            raise InvalidCoefficient("need at least two samples")
        dx = np.diff(x)
        if np.any(dx <= 0):
            raise InvalidCoefficient("sample points must be strictly increasing")
        slopes = np.diff(v) / dx
        return cls("sampled", x, tuple(np.array([v[i], slopes[i]]) for i in range(x.size - 1)))

    # evaluation ---------------------------------------------------------
    @property
    def degree(self) -> int:
        return max(int(np.max(np.nonzero(c)[0], initial=0)) for c in self.pieces)

    def piece_index(self, x, side="right"):
        x = np.asarray(x, dtype=float)
        bp = self.breakpoints
        idx = np.searchsorted(bp, x, side=side) - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def __call__(self, x, deriv: int = 0, side: str = "right"):
        x = np.asarray(x, dtype=float)
        idx = self.piece_index(x, side)
        t = x - self.breakpoints[idx]
        table = self._table
        for _ in range(deriv):
            table = table[:, 1:] * np.arange(1, table.shape[1])
        if table.shape[1] == 0:
            return np.zeros_like(t)
        rows = table[idx]
        out = rows[..., -1]
        for k in range(table.shape[1] - 2, -1, -1):
            out = out * t + rows[..., k]
        return out

    def derivative(self) -> "ScalarCoefficient":
        return ScalarCoefficient("piecewise", self.breakpoints, tuple(P.polyder(c) if c.size > 1 else np.zeros(1) for c in self.pieces))

    def local_pieces(self, breakpoints) -> list:
        """Local coefficients on each interval of ``breakpoints`` (a refinement of [0, 1])."""
        bp = np.asarray(breakpoints, dtype=float)
        mids = 0.5 * (bp[:-1] + bp[1:])
        idx = self.piece_index(mids)
        return [shift_poly(self.pieces[i], bp[k] - self.breakpoints[i]) for k, i in enumerate(idx)]

    def min_value(self):
        """Lower bound for the minimum over [0, 1] and a location attaining it.

        At a breakpoint the bound may be attained only as a one-sided limit.

        Exact per piece for degree <= 3 (endpoints and critical points); for
        higher degree a 256-interval scan per piece, lowered by a Lipschitz
        margin from the sampled derivative.
        """
        best, where = np.inf, 0.0
        bp = self.breakpoints
        for i, c in enumerate(self.pieces):
            length = bp[i + 1] - bp[i]
            deg = int(np.max(np.nonzero(c)[0], initial=0))
            if deg <= 3:
                cand = [0.0, length]
                if deg >= 2:
                    dc = P.polyder(c)
                    # negligible leading terms would blow up the companion matrix
                    dc = P.polytrim(dc, 1e-14 * np.max(np.abs(dc)))
                    r = P.polyroots(dc) if dc.size > 1 else np.zeros(0, dtype=complex)
                    r = r[np.abs(r.imag) < 1e-12].real
                    cand.extend(t for t in r if 0.0 < t < length)
                cand = np.asarray(cand)
                vals = P.polyval(cand, c)
                k = int(np.argmin(vals))
                lo, loc = vals[k], cand[k]
            else:
                t = np.linspace(0.0, length, 257)
                vals = P.polyval(t, c)
                k = int(np.argmin(vals))
                slope = np.max(np.abs(P.polyval(t, P.polyder(c))))
                lo, loc = vals[k] - slope * (t[1] - t[0]) * 0.5, t[k]
            if lo < best:
                best, where = float(lo), float(bp[i] + loc)
        return best, where

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": float(self.pieces[0][0])}
        if self.kind == "sampled":
            return {
                "kind": "sampled",
                "points": self.breakpoints.tolist(),
                "values": self(self.breakpoints).tolist(),
            }
        return {
            "kind": "piecewise",
            "breakpoints": self.breakpoints.tolist(),
            "local_coefficients": [c.tolist() for c in self.pieces],
        }


@dataclass(frozen=True)
class AtomicTerm:
    """``weight * delta_location`` (order 0) or ``weight * delta'_location`` (order 1)."""

    location: float
    weight: float
    order: int = 0


@dataclass(frozen=True, eq=False)
class GeneralizedCoefficient:
    smooth: Optional[ScalarCoefficient] = None
    atoms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @property
    def is_empty(self) -> bool:
        return self.smooth is None and not self.atoms

    def atoms_at(self, location, order=None):
        return [a for a in self.atoms if abs(a.location - location) <= LOCATION_TOL and (order is None or a.order == order)]

    def pair(self, w, dw, quad_points: int = 8) -> float:
        """Action on a test function ``w`` with derivative ``dw`` (both callables)."""
        total = 0.0
        if self.smooth is not None:
            g, gw = np.polynomial.legendre.leggauss(quad_points)
            bp = self.smooth.breakpoints
            for a, b in zip(bp[:-1], bp[1:]):
                x = 0.5 * (b - a) * g + 0.5 * (a + b)
                total += 0.5 * (b - a) * float(np.sum(gw * self.smooth(x) * w(x)))
        for atom in self.atoms:
            if atom.order == 0:
                total += atom.weight * w(atom.location)
            else:
                total -= atom.weight * dw(atom.location)
        return total

    def to_dict(self) -> dict:
        return {
            "smooth": None if self.smooth is None else self.smooth.to_dict(),
            "atoms": [[float(a.location), float(a.weight), int(a.order)] for a in self.atoms],
        }


def canonicalize(coeff: GeneralizedCoefficient) -> GeneralizedCoefficient:
    """Sort atoms by (location, order), merge coincident ones, drop zero weights."""
    merged: list = []
    for atom in sorted(coeff.atoms, key=lambda a: (a.location, a.order)):
        for i, m in enumerate(merged):
            if m.order == atom.order and abs(m.location - atom.location) <= LOCATION_TOL:
                merged[i] = AtomicTerm(m.location, m.weight + atom.weight, m.order)
                break
        else:
            merged.append(atom)
    kept = tuple(a for a in merged if a.weight != 0)
    return GeneralizedCoefficient(coeff.smooth, kept)


@dataclass(frozen=True)
class BoundaryFunctional:
    """The functional ``y -> a*y(endpoint) + b*y'(endpoint)``."""

    endpoint: int
    a: float
    b: float


@dataclass(frozen=True)
class SubspaceSpec:
    functionals: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "functionals", tuple(self.functionals))

    @classmethod
    def clamped(cls, *endpoints) -> "SubspaceSpec":
        return cls(tuple(f for e in endpoints for f in (BoundaryFunctional(e, 1.0, 0.0), BoundaryFunctional(e, 0.0, 1.0))))

    def at(self, endpoint: int) -> list:
        return [f for f in self.functionals if f.endpoint == endpoint]

    def free_basis(self, endpoint: int) -> np.ndarray:
        """Orthonormal basis (2 x k) of admissible (value, slope) pairs at ``endpoint``."""
        fs = self.at(endpoint)
        if not fs:
            return np.eye(2)
        if len(fs) >= 2:
            return np.zeros((2, 0))
        f = fs[0]
        v = np.array([-f.b, f.a], dtype=float)
        v /= np.hypot(f.a, f.b)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        return v[:, None]

    @property
    def is_full(self) -> bool:
        return not self.functionals


@dataclass(frozen=True, eq=False)
class Problem:
    p: ScalarCoefficient
    q: GeneralizedCoefficient = field(default_factory=GeneralizedCoefficient)
    h: GeneralizedCoefficient = field(default_factory=GeneralizedCoefficient)
    subspace: SubspaceSpec = field(default_factory=SubspaceSpec)

    def atom_locations(self) -> list:
        locs = sorted({a.location for a in self.q.atoms} | {a.location for a in self.h.atoms})
        out = []
        for x in locs:
            if not out or abs(x - out[-1]) > LOCATION_TOL:
                out.append(x)
        return out

    def coefficient_breakpoints(self) -> np.ndarray:
        bps = [self.p.breakpoints]
        for c in (self.q.smooth, self.h.smooth):
            if c is not None:
                bps.append(c.breakpoints)
        return np.unique(np.concatenate(bps))

    def to_dict(self) -> dict:
        return {
            "p": self.p.to_dict(),
            "q": self.q.to_dict(),
            "h": self.h.to_dict(),
            "subspace": [[f.endpoint, float(f.a), float(f.b)] for f in self.subspace.functionals],
        }

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class SecondOrderProblem:
    """The form ``int p y' z' dx + <q, y z>`` on all of W_2^1."""

    p: ScalarCoefficient
    q: GeneralizedCoefficient = field(default_factory=GeneralizedCoefficient)


@dataclass
class ValidationReport:
    passed: bool
    checks: dict
    messages: list
    canonical: Optional[Problem]
    p_min: float
    p_argmin: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": dict(self.checks),
            "messages": list(self.messages),
            "p_min": self.p_min,
            "p_argmin": self.p_argmin,
        }


def validate_problem(problem: Problem, strict: bool = True) -> ValidationReport:
    """Check the operator-class hypotheses and return the canonical problem.

    With ``strict`` the first failed check is raised as its specific error.
    """
    checks: dict = {}
    messages: list = []
    failures: list = []

    def record(name, ok, exc, msg):
        checks[name] = bool(ok)
        if not ok:
            messages.append(msg)
            failures.append(exc(msg))

    p_min, p_arg = problem.p.min_value()
    record("p_uniformly_positive", p_min > 0, NonPositiveLeadingCoefficient,
           f"leading coefficient p is not uniformly positive (min {p_min:.6g} at x={p_arg:.6g})")

    bad_q = [a for a in problem.q.atoms if a.order != 0]
    record("q_atom_orders", not bad_q, IllegalAtomOrder,
           f"q admits only order-0 atoms, got orders {sorted({a.order for a in bad_q})}")
    bad_h = [a for a in problem.h.atoms if a.order not in (0, 1)]
    record("h_atom_orders", not bad_h, IllegalAtomOrder,
           f"h admits only atoms of order 0 or 1, got orders {sorted({a.order for a in bad_h})}")

    all_atoms = problem.q.atoms + problem.h.atoms
    outside = [a for a in all_atoms if not (0.0 <= a.location <= 1.0) or not np.isfinite(a.weight)]
    record("atom_locations", not outside, InvalidCoefficient,
           "atom locations must lie in [0, 1] with finite weights")

    degenerate = [f for f in problem.subspace.functionals if f.a == 0 and f.b == 0]
    bad_end = [f for f in problem.subspace.functionals if f.endpoint not in (0, 1)]
    record("functionals_nondegenerate", not degenerate and not bad_end, DegenerateBoundaryFunctional,
           "boundary functionals need endpoint 0 or 1 and (a, b) != (0, 0)")
    independent = True
    for e in (0, 1):
        fs = problem.subspace.at(e)
        if len(fs) > 2:
            independent = False
        elif len(fs) == 2:
            m = np.array([[fs[0].a, fs[0].b], [fs[1].a, fs[1].b]], dtype=float)
            if abs(np.linalg.det(m)) <= 1e-12 * max(1.0, np.abs(m).max() ** 2):
                independent = False
    record("functionals_independent", independent, DegenerateBoundaryFunctional,
           "at most two linearly independent functionals per endpoint")

    passed = not failures
    canonical = None
    if passed:
        canonical = Problem(problem.p, canonicalize(problem.q), canonicalize(problem.h), problem.subspace)
    elif strict:
        raise failures[0]
    return ValidationReport(passed, checks, messages, canonical, float(p_min), float(p_arg))


# ---------------------------------------------------------------------------
# named problems used throughout the tests and the bundled configs
# ---------------------------------------------------------------------------

def cantilever(p: Optional[ScalarCoefficient] = None) -> Problem:
    """Beam clamped at 0, free at 1."""
    return Problem(p or ScalarCoefficient.constant(1.0), subspace=SubspaceSpec.clamped(0))


def proposition11(alpha=1.0, beta=1.0, gamma=1.0, p: Optional[ScalarCoefficient] = None) -> Problem:
    """``int p y'' z'' + alpha y(0) z(0) + beta y'(0) z'(0) + gamma y'(1) z'(1)`` on W_2^2."""
    q = GeneralizedCoefficient(None, (AtomicTerm(0.0, beta, 0), AtomicTerm(1.0, gamma, 0)))
    h = GeneralizedCoefficient(None, (AtomicTerm(0.0, alpha, 0),))
    return Problem(p or ScalarCoefficient.constant(1.0), q, h)


def threepoint() -> Problem:
    """y'''' + y = f with a point condition at 1/2, written as a single form."""
    q = GeneralizedCoefficient(None, (AtomicTerm(1.0, 1.0, 0),))
    h = GeneralizedCoefficient(
        ScalarCoefficient.constant(1.0),
        (AtomicTerm(0.5, 1.0, 0), AtomicTerm(1.0, 1.0, 0), AtomicTerm(1.0, -1.0, 1)),
    )
    return Problem(ScalarCoefficient.constant(1.0), q, h, SubspaceSpec.clamped(0))


def stiff_foundation(k: float = 2000.0) -> Problem:
    """Cantilever on an elastic foundation of stiffness ``k``: ``y'''' + k y``."""
    return Problem(ScalarCoefficient.constant(1.0), h=GeneralizedCoefficient(ScalarCoefficient.constant(k)),
                   subspace=SubspaceSpec.clamped(0))


def sequence_to_atoms(rows: Sequence) -> tuple:
    return tuple(AtomicTerm(float(r[0]), float(r[1]), int(r[2])) for r in rows)
