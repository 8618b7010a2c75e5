"""Green kernel samples G(t, s) = <delta_t, L^{-1} delta_s> and their sign evidence."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyRestriction
from .fem import Factorization, discretize, solve_reduced
from .problem import Problem

POSITIVITY_TOL = 1e-9
BOUNDARY_MARGIN = 1.0 / 64


@dataclass(frozen=True, eq=False)
class GreenKernel:
    t_grid: np.ndarray
    s_grid: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("t_grid", "s_grid", "values"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.values.shape != (self.t_grid.size, self.s_grid.size):
            raise ValueError("kernel values must have shape (len(t_grid), len(s_grid))")

    @property
    def square(self) -> bool:
        return self.t_grid.shape == self.s_grid.shape and np.array_equal(self.t_grid, self.s_grid)

    def symmetry_defect(self) -> float:
        """max |G_ij - G_ji| / max |G| (square kernels only)."""
        if not self.square:
            raise ValueError("symmetry needs t_grid == s_grid")
        scale = float(np.max(np.abs(self.values))) or 1.0
        return float(np.max(np.abs(self.values - self.values.T))) / scale

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t\\s"] + [f"{s:.17g}" for s in self.s_grid])
        for t, row in zip(self.t_grid, self.values):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
        return buf.getvalue()


def green_matrix(fact: Factorization, t_grid: Sequence[float], s_grid: Sequence[float]) -> GreenKernel:
    """One solve per column ``delta_{s_j}``; both grids must consist of mesh nodes."""
    op = fact.operator
    mesh = op.mesh
    t_idx = [mesh.node_index(t) for t in t_grid]
    s_idx = [mesh.node_index(s) for s in s_grid]
    loads = np.zeros((mesh.nodes.size, 2, len(s_idx)))
    for j, k in enumerate(s_idx):
        loads[k, 0, j] = 1.0
    x = solve_reduced(fact, op.dofmap.restrict(loads))
    full = op.dofmap.expand(x)
    values = full[t_idx, 0, :]
    prov = {"n_elements": int(mesh.n_elements), "problem": op.problem.digest()}
    return GreenKernel(np.asarray(t_grid, dtype=float), np.asarray(s_grid, dtype=float), values, prov)


def compute_kernel(problem: Problem, n_elements: int, t_grid, s_grid=None) -> GreenKernel:
    """Mesh containing both grids, factorize, and sample the kernel."""
    s_grid = t_grid if s_grid is None else s_grid
    fact = discretize(problem, n_elements, list(t_grid) + list(s_grid))
    return green_matrix(fact, t_grid, s_grid)


def uniform_grid(n_points: int, include_ends: bool = True) -> np.ndarray:
    if include_ends:
        return np.linspace(0.0, 1.0, n_points)
    return np.arange(1, n_points + 1) / (n_points + 1)


@dataclass
class PositivityReport:
    classification: str
    min_interior: float
    argmin_interior: tuple
    min_closed: float
    argmin_closed: tuple
    margin: float
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "min_interior": self.min_interior,
            "argmin": list(self.argmin_interior),
            "min_closed": self.min_closed,
            "argmin_closed": list(self.argmin_closed),
            "tolerances": {"boundary_margin": self.margin, "positivity_tol": self.tolerance},
        }


def positivity_report(kernel: GreenKernel, boundary_margin: float = BOUNDARY_MARGIN,
                      rel_tol: float = POSITIVITY_TOL) -> PositivityReport:
    """Classify the sampled kernel.

    ``sign-changing`` if any sample is below ``-tol``; otherwise
    ``closed-uniform-positive`` if every sample exceeds ``tol``,
    ``interior-positive`` if every sample with both coordinates in
    [margin, 1 - margin] does, and ``inconclusive`` when the interior minimum is
    within ``tol`` of zero.  ``tol = rel_tol * max |G|``.
    """
    g = kernel.values
    tol = rel_tol * float(np.max(np.abs(g)))
    ti = (kernel.t_grid >= boundary_margin) & (kernel.t_grid <= 1 - boundary_margin)
    si = (kernel.s_grid >= boundary_margin) & (kernel.s_grid <= 1 - boundary_margin)
    i, j = np.unravel_index(np.argmin(g), g.shape)
    min_closed, arg_closed = float(g[i, j]), (float(kernel.t_grid[i]), float(kernel.s_grid[j]))
    if ti.any() and si.any():
        sub = g[np.ix_(ti, si)]
        a, b = np.unravel_index(np.argmin(sub), sub.shape)
        min_int = float(sub[a, b])
        arg_int = (float(kernel.t_grid[ti][a]), float(kernel.s_grid[si][b]))
    else:
        min_int, arg_int = float("nan"), (float("nan"), float("nan"))
    if min_closed < -tol:
        cls = "sign-changing"
    elif min_closed > tol:
        cls = "closed-uniform-positive"
    elif min_int > tol:
        cls = "interior-positive"
    else:
        cls = "inconclusive"
    return PositivityReport(cls, min_int, arg_int, min_closed, arg_closed, boundary_margin, tol)


def restrict_kernel(kernel: GreenKernel, eps: float) -> GreenKernel:
    """Sub-kernel on the grid points inside [eps, 1 - eps] (values copied)."""
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    ti = (kernel.t_grid >= eps) & (kernel.t_grid <= 1 - eps)
    si = (kernel.s_grid >= eps) & (kernel.s_grid <= 1 - eps)
    if not ti.any() or not si.any():
        raise EmptyRestriction(f"no grid points in [{eps}, {1 - eps}]")
    prov = dict(kernel.provenance, restricted_to=[eps, 1 - eps])
    return GreenKernel(kernel.t_grid[ti], kernel.s_grid[si], kernel.values[np.ix_(ti, si)], prov)


def kernel_column(fact: Factorization, s: float, t_grid) -> np.ndarray:
    return green_matrix(fact, t_grid, [s]).values[:, 0]


def refine_value(problem: Problem, t: float, s: float, n_elements: int) -> float:
    """G_h(t, s) on a mesh of ``n_elements`` containing t and s."""
    return float(compute_kernel(problem, n_elements, [t], [s]).values[0, 0])
