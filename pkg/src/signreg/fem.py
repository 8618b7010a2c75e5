"""Conforming Hermite-cubic discretization of the fourth-order form.

Every node carries two degrees of freedom, the value and the slope, so point
atoms (which act on values and slopes) assemble exactly once their locations
are nodes.  Essential boundary functionals are eliminated by replacing the
two endpoint DOFs with an orthonormal basis of the admissible pairs; the
resulting band matrix keeps half-bandwidth 3 and is stored lower-only, so it
is symmetric by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import MeshMissingAtom, NotPositiveDefinite, OutOfDomain, PointNotOnMesh
from .problem import LOCATION_TOL, Problem

BANDWIDTH = 3
PIVOT_TOL = 1e-12
NODE_TOL = 1e-13


def hermite_basis(xi, h, deriv=0):
    """Cubic Hermite shape functions (value0, slope0, value1, slope1) and x-derivatives."""
    xi = np.asarray(xi, dtype=float)
    h = np.asarray(h, dtype=float)
    one = np.ones_like(xi * h)
    if deriv == 0:
        return np.stack([1 - 3 * xi**2 + 2 * xi**3, h * (xi - 2 * xi**2 + xi**3),
                         3 * xi**2 - 2 * xi**3, h * (xi**3 - xi**2)])
    if deriv == 1:
        return np.stack([6 * (xi**2 - xi) / h, 1 - 4 * xi + 3 * xi**2,
                         6 * (xi - xi**2) / h, 3 * xi**2 - 2 * xi])
    if deriv == 2:
        return np.stack([(12 * xi - 6) / h**2, (6 * xi - 4) / h,
                         (6 - 12 * xi) / h**2, (6 * xi - 2) / h])
    if deriv == 3:
        return np.stack([12 / h**3 * one, 6 / h**2 * one, -12 / h**3 * one, 6 / h**2 * one])
    return np.zeros((4,) + np.shape(xi * h))


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray

    def __post_init__(self):
        x = np.array(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 2 or x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("mesh nodes must run from 0 to 1")
        if np.any(np.diff(x) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @classmethod
    def uniform(cls, n_elements: int) -> "Mesh":
        x = np.linspace(0.0, 1.0, n_elements + 1)
        x[-1] = 1.0
        return cls(x)

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def find_node(self, x: float) -> Optional[int]:
        i = int(np.clip(np.searchsorted(self.nodes, x), 0, self.nodes.size - 1))
        for j in (i - 1, i):
            if 0 <= j < self.nodes.size and abs(self.nodes[j] - x) <= NODE_TOL:
                return j
        return None

    def node_index(self, x: float) -> int:
        j = self.find_node(x)
        if j is None:
            raise PointNotOnMesh(f"{x!r} is not a mesh node")
        return j

    def element_of(self, x, side="right"):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise OutOfDomain("evaluation point outside [0, 1]")
        idx = np.searchsorted(self.nodes, x, side=side) - 1
        return np.clip(idx, 0, self.n_elements - 1)

    def refined(self, factor: int = 2) -> "Mesh":
        """Split every element into ``factor`` equal parts (keeps all nodes)."""
        t = np.arange(factor) / factor
        x = (self.nodes[:-1, None] + self.lengths[:, None] * t[None, :]).ravel()
        return Mesh(np.append(x, 1.0))


def build_mesh(problem: Problem, n_elements: int, extra_points: Sequence[float] = ()) -> Mesh:
    """Quasi-uniform mesh whose nodes include every atom location and extra point.

    A required point close to a free uniform node (within a third of the
    spacing) moves that node; otherwise the point is inserted.
    """
    if n_elements < 2:
        raise ValueError("n_elements must be at least 2")
    nodes = list(np.linspace(0.0, 1.0, n_elements + 1))
    nodes[-1] = 1.0
    h = 1.0 / n_elements
    pinned = {0, n_elements}
    required = sorted({float(x) for x in list(problem.atom_locations()) + list(extra_points)})
    for r in required:
        if not 0.0 <= r <= 1.0:
            raise OutOfDomain(f"requested mesh point {r} outside [0, 1]")
    inserted = []
    for r in required:
        k = int(round(r / h))
        if abs(nodes[k] - r) <= NODE_TOL:
            pinned.add(k)
            continue
        if k not in pinned and abs(k * h - r) <= h / 3:
            nodes[k] = r
            pinned.add(k)
        else:
            inserted.append(r)
    x = np.unique(np.array(nodes + inserted))
    # merge points that collapsed onto each other within the node tolerance
    keep = np.concatenate([[True], np.diff(x) > NODE_TOL])
    x = x[keep]
    x[0], x[-1] = 0.0, 1.0
    return Mesh(x)


@dataclass(frozen=True, eq=False)
class FiniteElementFunction:
    """Piecewise-cubic C^1 function given by (value, slope) at every node."""

    mesh: Mesh
    dofs: np.ndarray

    def __post_init__(self):
        d = np.array(self.dofs, dtype=float).reshape(self.mesh.nodes.size, 2)
        d.setflags(write=False)
        object.__setattr__(self, "dofs", d)

    def __call__(self, t, order: int = 0, side: str = "right"):
        t = np.asarray(t, dtype=float)
        e = self.mesh.element_of(t, side)
        x0 = self.mesh.nodes[e]
        h = self.mesh.nodes[e + 1] - x0
        xi = (t - x0) / h
        b = hermite_basis(xi, h, order)
        d = self.dofs
        return b[0] * d[e, 0] + b[1] * d[e, 1] + b[2] * d[e + 1, 0] + b[3] * d[e + 1, 1]

    @property
    def values(self) -> np.ndarray:
        return self.dofs[:, 0]

    @property
    def slopes(self) -> np.ndarray:
        return self.dofs[:, 1]

    def local_polynomials(self) -> np.ndarray:
        """(n_elements, 4) ascending coefficients in ``x - node_e`` on each element."""
        d = self.dofs
        h = self.mesh.lengths
        v0, s0, v1, s1 = d[:-1, 0], d[:-1, 1], d[1:, 0], d[1:, 1]
        c2 = (3 * (v1 - v0) / h - 2 * s0 - s1) / h
        c3 = (2 * (v0 - v1) / h + s0 + s1) / h**2
        return np.stack([v0, s0, c2, c3], axis=1)

    def sup_norm(self, samples_per_element: int = 8) -> float:
        t = sample_grid(self.mesh, samples_per_element)
        return float(np.max(np.abs(self(t))))


def evaluate(u: FiniteElementFunction, t, derivative_order: int = 0, side: str = "right"):
    """Exact piecewise-cubic evaluation; ``side`` selects the element at a node."""
    if derivative_order not in (0, 1, 2, 3):
        raise ValueError("derivative_order must be 0..3")
    return u(t, derivative_order, side)


def hermite_interpolant(mesh: Mesh, f, df) -> FiniteElementFunction:
    x = mesh.nodes
    return FiniteElementFunction(mesh, np.stack([np.asarray(f(x), dtype=float) * np.ones_like(x),
                                                 np.asarray(df(x), dtype=float) * np.ones_like(x)], axis=1))


def sample_grid(mesh: Mesh, per_element: int = 8) -> np.ndarray:
    """Nodes plus ``per_element - 1`` equispaced interior points per element."""
    t = np.arange(per_element) / per_element
    x = (mesh.nodes[:-1, None] + mesh.lengths[:, None] * t[None, :]).ravel()
    return np.append(x, 1.0)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _quadrature_points(mesh: Mesh, breakpoints, n_points: int):
    """Gauss points on the common refinement of the mesh and ``breakpoints``."""
    bp = np.union1d(mesh.nodes, np.asarray(breakpoints, dtype=float))
    bp = bp[np.concatenate([[True], np.diff(bp) > NODE_TOL])]
    bp[-1] = 1.0
    g, gw = np.polynomial.legendre.leggauss(n_points)
    a, b = bp[:-1], bp[1:]
    x = (0.5 * (b - a))[:, None] * g[None, :] + (0.5 * (a + b))[:, None]
    w = (0.5 * (b - a))[:, None] * gw[None, :]
    elem = np.clip(np.searchsorted(mesh.nodes, 0.5 * (a + b)) - 1, 0, mesh.n_elements - 1)
    elem = np.repeat(elem, n_points)
    return x.ravel(), w.ravel(), elem


def _n_gauss(*degrees) -> int:
    need = max(d + 7 for d in degrees)  # basis products are at most degree 6
    return max(4, math.ceil((need + 1) / 2))


_UPPER = [(i, j) for i in range(4) for j in range(i, 4)]


def element_matrices(problem: Problem, mesh: Mesh, terms=("p", "q", "h")) -> np.ndarray:
    """(n_elements, 4, 4) element matrices of the smooth parts of the form."""
    coeffs = []
    if "p" in terms:
        coeffs.append((problem.p, 2))
    if "q" in terms and problem.q.smooth is not None:
        coeffs.append((problem.q.smooth, 1))
    if "h" in terms and problem.h.smooth is not None:
        coeffs.append((problem.h.smooth, 0))
    ne = mesh.n_elements
    out = np.zeros((ne, 4, 4))
    if not coeffs:
        return out
    bps = np.unique(np.concatenate([c.breakpoints for c, _ in coeffs]))
    x, w, elem = _quadrature_points(mesh, bps, _n_gauss(*(c.degree for c, _ in coeffs)))
    h = mesh.lengths[elem]
    xi = (x - mesh.nodes[elem]) / h
    for coef, order in coeffs:
        b = hermite_basis(xi, h, order)
        cw = coef(x) * w
        for i, j in _UPPER:
            out[:, i, j] += np.bincount(elem, weights=cw * b[i] * b[j], minlength=ne)
    for i, j in _UPPER:
        if i != j:
            out[:, j, i] = out[:, i, j]
    return out


def quadrature_form(problem: Problem, u: "FiniteElementFunction", v: Optional["FiniteElementFunction"] = None) -> float:
    """The form evaluated pointwise: Gauss quadrature of the smooth terms plus atoms.

    Unlike ``u^T K v`` this never multiplies O(h^-3) stiffness entries by O(1)
    nodal data, so it stays accurate on fine meshes.
    """
    v = u if v is None else v
    terms = [(problem.p, 2)]
    if problem.q.smooth is not None:
        terms.append((problem.q.smooth, 1))
    if problem.h.smooth is not None:
        terms.append((problem.h.smooth, 0))
    bps = np.unique(np.concatenate([c.breakpoints for c, _ in terms] + [v.mesh.nodes]))
    x, w, _ = _quadrature_points(u.mesh, bps, _n_gauss(*(c.degree for c, _ in terms)))
    total = 0.0
    for coef, order in terms:
        total += float(np.sum(coef(x) * w * u(x, order) * v(x, order)))
    for a in problem.q.atoms:
        total += a.weight * float(u(a.location, 1) * v(a.location, 1))
    for a in problem.h.atoms:
        x0 = a.location
        if a.order == 0:
            total += a.weight * float(u(x0) * v(x0))
        else:
            total -= a.weight * float(u(x0, 1) * v(x0) + u(x0) * v(x0, 1))
    return total


def node_matrices(problem: Problem, mesh: Mesh, terms=("q", "h")) -> dict:
    """2x2 (value, slope) contributions of atoms, keyed by node index."""
    out: dict = {}
    for name in terms:
        coeff = getattr(problem, name)
        for atom in coeff.atoms:
            k = mesh.find_node(atom.location)
            if k is None:
                raise MeshMissingAtom(f"atom at {atom.location!r} is not a mesh node")
            m = out.setdefault(k, np.zeros((2, 2)))
            c = float(atom.weight)
            if name == "q":
                m[1, 1] += c
            elif atom.order == 0:
                m[0, 0] += c
            else:
                m[0, 1] -= c
                m[1, 0] -= c
    return out


def _congruence(m, t):
    """``t.T @ m @ t`` computed entrywise on the upper triangle and mirrored."""
    k = t.shape[1]
    out = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            out[i, j] = out[j, i] = t[:, i] @ (m @ t[:, j])
    return out


@dataclass(frozen=True, eq=False)
class DofMap:
    """Reduced numbering after eliminating endpoint functionals."""

    n_nodes: int
    basis0: np.ndarray
    basis1: np.ndarray

    @property
    def k0(self) -> int:
        return self.basis0.shape[1]

    @property
    def k1(self) -> int:
        return self.basis1.shape[1]

    @property
    def n_dofs(self) -> int:
        return self.k0 + 2 * (self.n_nodes - 2) + self.k1

    def basis(self, node: int) -> np.ndarray:
        if node == 0:
            return self.basis0
        if node == self.n_nodes - 1:
            return self.basis1
        return np.eye(2)

    def offset(self, node: int) -> int:
        return 0 if node == 0 else self.k0 + 2 * (node - 1)

    def expand(self, u):
        """Reduced coefficients -> full (value, slope) array of shape (n_nodes, 2[, k])."""
        u = np.asarray(u, dtype=float)
        extra = u.shape[1:]
        full = np.zeros((self.n_nodes, 2) + extra)
        full[1:-1] = u[self.k0:self.k0 + 2 * (self.n_nodes - 2)].reshape((self.n_nodes - 2, 2) + extra)
        full[0] = np.tensordot(self.basis0, u[: self.k0], axes=(1, 0))
        full[-1] = np.tensordot(self.basis1, u[self.n_dofs - self.k1:], axes=(1, 0))
        return full

    def restrict(self, v):
        """Full load array (n_nodes, 2[, k]) -> reduced load."""
        v = np.asarray(v, dtype=float)
        extra = v.shape[2:]
        out = np.empty((self.n_dofs,) + extra)
        out[: self.k0] = np.tensordot(self.basis0.T, v[0], axes=(1, 0))
        out[self.k0:self.k0 + 2 * (self.n_nodes - 2)] = v[1:-1].reshape((-1,) + extra)
        out[self.n_dofs - self.k1:] = np.tensordot(self.basis1.T, v[-1], axes=(1, 0))
        return out


def _scatter(ab, m, gidx):
    for a in range(len(gidx)):
        for b in range(a, len(gidx)):
            i, j = max(gidx[a], gidx[b]), min(gidx[a], gidx[b])
            ab[i - j, j] += m[a, b]


def _assemble_band(elem, nodal, dofmap: DofMap) -> np.ndarray:
    nn = dofmap.n_nodes
    ne = nn - 1
    ab = np.zeros((BANDWIDTH + 1, dofmap.n_dofs))
    special = {0, ne - 1}
    interior = np.array([e for e in range(ne) if e not in special], dtype=int)
    if interior.size:
        base = dofmap.k0 + 2 * (interior - 1)
        for a in range(4):
            for b in range(a, 4):
                np.add.at(ab[b - a], base + a, elem[interior, b, a])
    for e in sorted(special):
        blocks = [dofmap.basis(e), dofmap.basis(e + 1)]
        t = np.zeros((4, blocks[0].shape[1] + blocks[1].shape[1]))
        t[:2, : blocks[0].shape[1]] = blocks[0]
        t[2:, blocks[0].shape[1]:] = blocks[1]
        gidx = [dofmap.offset(e) + k for k in range(blocks[0].shape[1])]
        gidx += [dofmap.offset(e + 1) + k for k in range(blocks[1].shape[1])]
        _scatter(ab, _congruence(elem[e], t), gidx)
    for node in sorted(nodal):
        bn = dofmap.basis(node)
        gidx = [dofmap.offset(node) + k for k in range(bn.shape[1])]
        _scatter(ab, _congruence(nodal[node], bn), gidx)
    return ab


def band_to_dense(ab: np.ndarray) -> np.ndarray:
    n = ab.shape[1]
    a = np.zeros((n, n))
    for d in range(ab.shape[0]):
        idx = np.arange(n - d)
        a[idx + d, idx] = ab[d, : n - d]
        a[idx, idx + d] = ab[d, : n - d]
    return a


def band_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = ab.shape[1]
    y = ab[0] * x if x.ndim == 1 else ab[0][:, None] * x
    for d in range(1, ab.shape[0]):
        band = ab[d, : n - d] if x.ndim == 1 else ab[d, : n - d][:, None]
        y[d:] += band * x[: n - d]
        y[: n - d] += band * x[d:]
    return y


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    problem: Problem
    mesh: Mesh
    dofmap: DofMap
    band: np.ndarray
    full_band: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    def dense(self) -> np.ndarray:
        return band_to_dense(self.band)

    def function(self, reduced) -> FiniteElementFunction:
        return FiniteElementFunction(self.mesh, self.dofmap.expand(reduced))

    def form(self, u: FiniteElementFunction, v: Optional[FiniteElementFunction] = None) -> float:
        """Bilinear form on the full (unconstrained) space."""
        v = u if v is None else v
        return float(u.dofs.ravel() @ band_matvec(self.full_band, v.dofs.ravel()))

    def dump_triplets(self, stream) -> None:
        """Write nonzero entries as ``i j value`` lines, 17 significant digits."""
        a = self.dense()
        for i, j in zip(*np.nonzero(a)):
            stream.write(f"{i} {j} {a[i, j]:.17g}\n")


def assemble(problem: Problem, mesh: Mesh) -> DiscreteOperator:
    elem = element_matrices(problem, mesh)
    nodal = node_matrices(problem, mesh)
    nn = mesh.nodes.size
    dofmap = DofMap(nn, problem.subspace.free_basis(0), problem.subspace.free_basis(1))
    full = DofMap(nn, np.eye(2), np.eye(2))
    band = _assemble_band(elem, nodal, dofmap)
    full_band = _assemble_band(elem, nodal, full)
    for arr in (band, full_band):
        arr.setflags(write=False)
    return DiscreteOperator(problem, mesh, dofmap, band, full_band)


def assemble_term(problem: Problem, mesh: Mesh, term: str) -> np.ndarray:
    """Dense full-space matrix of one term ("p", "q" or "h") including its atoms."""
    elem = element_matrices(problem, mesh, terms=(term,))
    nodal = node_matrices(problem, mesh, terms=(term,)) if term in ("q", "h") else {}
    full = DofMap(mesh.nodes.size, np.eye(2), np.eye(2))
    return band_to_dense(_assemble_band(elem, nodal, full))


# ---------------------------------------------------------------------------
# factorization and solves
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Factorization:
    operator: DiscreteOperator
    lower: np.ndarray
    pivots: np.ndarray
    pivot_tol: float

    positive_definite = True

    @property
    def min_pivot(self) -> float:
        return float(self.pivots.min())

    @property
    def mesh(self) -> Mesh:
        return self.operator.mesh

    @property
    def problem(self) -> Problem:
        return self.operator.problem


def pivot_check(op: DiscreteOperator, pivot_tol: float = PIVOT_TOL):
    """Run the factorization; returns (lower, pivots, fail_index, threshold)."""
    scale = float(np.max(np.abs(op.band[0]))) if op.n_dofs else 1.0
    threshold = pivot_tol * scale
    lb, d, fail = kernels.ldlt_band(op.band, threshold)
    return lb, d, fail, threshold


def factorize(op: DiscreteOperator, pivot_tol: float = PIVOT_TOL) -> Factorization:
    """Band LDL^T; raises :class:`NotPositiveDefinite` on a pivot <= pivot_tol * max diag."""
    lb, d, fail, threshold = pivot_check(op, pivot_tol)
    if fail >= 0:
        raise NotPositiveDefinite(
            f"pivot {fail} is {d[fail]:.3e} <= {threshold:.3e}: form is not positive definite "
            "at this discretization", min_pivot=float(d[fail]), index=fail)
    lb.setflags(write=False)
    d.setflags(write=False)
    return Factorization(op, lb, d, pivot_tol)


@dataclass(frozen=True)
class PointLoad:
    """``weight * delta_location`` (order 0) or ``weight * delta'_location`` (order 1)."""

    location: float
    order: int = 0
    weight: float = 1.0


def load_array(mesh: Mesh, rhs, quad_points: int = 6) -> np.ndarray:
    """Full (n_nodes, 2) array of <rhs, basis function> pairings."""
    out = np.zeros((mesh.nodes.size, 2))
    if rhs is None:
        return out
    if isinstance(rhs, (list, tuple)):
        for r in rhs:
            out += load_array(mesh, r, quad_points)
        return out
    if isinstance(rhs, PointLoad):
        k = mesh.node_index(rhs.location)
        if rhs.order == 0:
            out[k, 0] += rhs.weight
        else:
            out[k, 1] -= rhs.weight
        return out
    if isinstance(rhs, (int, float)) and rhs == 0:
        return out
    if isinstance(rhs, (int, float)):
        value = float(rhs)
        rhs = lambda x: np.full_like(x, value)  # noqa: E731
    bps = getattr(rhs, "breakpoints", None)
    if bps is None:
        bps = getattr(rhs, "points", None)
    bps = np.array([0.0, 1.0]) if bps is None else np.clip(np.asarray(bps, dtype=float), 0.0, 1.0)
    x, w, elem = _quadrature_points(mesh, bps, quad_points)
    h = mesh.lengths[elem]
    b = hermite_basis((x - mesh.nodes[elem]) / h, h, 0)
    fw = np.asarray(rhs(x), dtype=float) * w
    ne = mesh.n_elements
    local = np.stack([np.bincount(elem, weights=fw * b[i], minlength=ne) for i in range(4)], axis=1)
    out[:-1, 0] += local[:, 0]
    out[:-1, 1] += local[:, 1]
    out[1:, 0] += local[:, 2]
    out[1:, 1] += local[:, 3]
    return out


REFINE_STEPS = 2


def solve_reduced(fact: Factorization, reduced_rhs: np.ndarray, refine: int = REFINE_STEPS) -> np.ndarray:
    """Solve on the reduced space with iterative refinement.

    The residual is formed in extended precision; a stiffness matrix with
    condition ~h^-4 otherwise loses about that factor of accuracy.
    """
    b = np.asarray(reduced_rhs, dtype=float)
    x = kernels.ldlt_solve(fact.lower, fact.pivots, b)
    if refine:
        kl = fact.operator.band.astype(np.longdouble)
        bl = b.astype(np.longdouble)
        for _ in range(refine):
            r = (bl - band_matvec(kl, x.astype(np.longdouble))).astype(float)
            x = x + kernels.ldlt_solve(fact.lower, fact.pivots, r)
    return x


def solve(fact: Factorization, rhs) -> FiniteElementFunction:
    """Galerkin solution of ``L y = rhs`` (point loads must sit on mesh nodes)."""
    op = fact.operator
    r = op.dofmap.restrict(load_array(op.mesh, rhs))
    return op.function(solve_reduced(fact, r))


def solve_many(fact: Factorization, rhs_list: Iterable) -> list:
    op = fact.operator
    cols = [op.dofmap.restrict(load_array(op.mesh, r)) for r in rhs_list]
    if not cols:
        return []
    x = solve_reduced(fact, np.stack(cols, axis=1))
    full = op.dofmap.expand(x)
    return [FiniteElementFunction(op.mesh, full[:, :, k]) for k in range(x.shape[1])]


def discretize(problem: Problem, n_elements: int, extra_points: Sequence[float] = (),
               pivot_tol: float = PIVOT_TOL) -> Factorization:
    """Mesh, assemble and factorize in one call."""
    mesh = build_mesh(problem, n_elements, extra_points)
    return factorize(assemble(problem, mesh), pivot_tol)
