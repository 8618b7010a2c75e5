"""Compound minors of a sampled Green kernel (total nonnegativity evidence)."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Optional

import numpy as np

from . import kernels
from .green import GreenKernel

MINOR_TOL = 1e-9
EXHAUSTIVE_CAP = comb(14, 4) ** 2
DEFAULT_SAMPLES = 20000


@dataclass(frozen=True)
class MinorSelection:
    rows: tuple
    cols: tuple

    def __post_init__(self):
        rows, cols = tuple(int(i) for i in self.rows), tuple(int(j) for j in self.cols)
        if len(rows) != len(cols) or not rows:
            raise ValueError("row and column selections must be nonempty and of equal length")
        if any(b <= a for a, b in zip(rows, rows[1:])) or any(b <= a for a, b in zip(cols, cols[1:])):
            raise ValueError("selections must be strictly increasing")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @property
    def order(self) -> int:
        return len(self.rows)


def compound_minor(kernel: GreenKernel, sel: MinorSelection, ordered: bool = True) -> float:
    """Determinant of ``G[rows][:, cols]`` by LU with partial pivoting.

    ``ordered=False`` skips the increasing-index check so that permuted
    selections can be evaluated.
    """
    rows = np.asarray(sel.rows if ordered else sel[0], dtype=np.int64)[None, :]
    cols = np.asarray(sel.cols if ordered else sel[1], dtype=np.int64)[None, :]
    det, _ = kernels.minor_table(kernel.values, rows, cols)
    return float(det[0, 0])


def condition_estimate(kernel: GreenKernel, sel: MinorSelection) -> float:
    return float(np.linalg.cond(kernel.values[np.ix_(sel.rows, sel.cols)]))


@dataclass
class OrderSummary:
    order: int
    count: int
    min_minor: float
    min_scaled: float
    min_diagonal_minor: float
    violations: list
    diagonal_failures: list

    def to_dict(self) -> dict:
        return {"count": self.count, "min_minor": self.min_minor, "min_scaled_minor": self.min_scaled,
                "min_diagonal_minor": self.min_diagonal_minor, "violations": self.violations,
                "diagonal_failures": self.diagonal_failures}


@dataclass
class TNReport:
    max_order: int
    orders: dict
    enumeration: dict
    tol: float
    t_grid: list = field(default_factory=list)

    @property
    def n_violations(self) -> int:
        return sum(len(o.violations) + len(o.diagonal_failures) for o in self.orders.values())

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_dict(self) -> dict:
        return {"max_order": self.max_order, "tol": self.tol, "enumeration": self.enumeration,
                "orders": {str(k): v.to_dict() for k, v in self.orders.items()},
                "violations": self.n_violations, "pass": self.passed}


def _subsets(n: int, r: int, count: int, rng) -> np.ndarray:
    """``count`` sorted random r-subsets of range(n) (with possible repeats)."""
    keys = rng.random((count, n))
    return np.sort(np.argsort(keys, axis=1)[:, :r], axis=1)


def tn_report(kernel: GreenKernel, max_order: int, tol: float = MINOR_TOL, seed: int = 0,
              samples: int = DEFAULT_SAMPLES, max_listed: int = 50,
              diag_tol: Optional[float] = None) -> TNReport:
    """Check every compound minor of order <= ``max_order`` for nonnegativity.

    A minor counts as negative when below ``-tol`` times the product of its
    row maxima; diagonal (rows == cols) minors must exceed ``+diag_tol``
    (default ``tol``) on the same scale.  Orders whose selection count exceeds
    ``C(14, 4)^2`` are sampled with ``seed``.
    """
    g = kernel.values
    m, k = g.shape
    if max_order < 1 or max_order > min(m, k):
        raise ValueError(f"max_order must lie in 1..{min(m, k)}")
    diag_tol = tol if diag_tol is None else diag_tol
    rng = np.random.default_rng(seed)
    orders, enum = {}, {}
    square = kernel.square
    for r in range(1, max_order + 1):
        total = comb(m, r) * comb(k, r)
        if total <= EXHAUSTIVE_CAP:
            rows = np.array(list(combinations(range(m), r)), dtype=np.int64)
            cols = np.array(list(combinations(range(k), r)), dtype=np.int64)
            det, scale = kernels.minor_table(g, rows, cols)
            enum[str(r)] = {"mode": "exhaustive", "count": int(total)}
            pairs = None
        else:
            rows = _subsets(m, r, samples, rng)
            cols = _subsets(k, r, samples, rng)
            # evaluate the paired sample (rows[i], cols[i]) only
            det = np.empty(samples)
            scale = np.empty(samples)
            for i in range(samples):
                d, s = kernels.minor_table(g, rows[i:i + 1], cols[i:i + 1])
                det[i], scale[i] = d[0, 0], s[0, 0]
            enum[str(r)] = {"mode": "sampled", "seed": seed, "count": samples, "population": int(total)}
            pairs = True
        scaled = det / np.where(scale > 0, scale, 1.0)
        bad = np.argwhere(scaled < -tol) if pairs is None else np.flatnonzero(scaled < -tol)[:, None]
        viol = []
        for idx in bad[:max_listed]:
            i, j = (idx[0], idx[1]) if pairs is None else (idx[0], idx[0])
            viol.append({"rows": rows[i].tolist(), "cols": cols[j].tolist(),
                         "value": float(det[i, j] if pairs is None else det[i]),
                         "threshold": float(-tol * (scale[i, j] if pairs is None else scale[i]))})
        min_diag, diag_fail = float("nan"), []
        if square and pairs is None:
            dd, ds = np.diagonal(det), np.diagonal(scale)
            min_diag = float(dd.min())
            for i in np.flatnonzero(dd <= diag_tol * ds)[:max_listed]:
                diag_fail.append({"rows": rows[i].tolist(), "value": float(dd[i])})
        elif square:
            diag_rows = _subsets(m, r, samples, rng)
            dd, ds = kernels.minor_table(g, diag_rows, diag_rows)
            dd, ds = np.diagonal(dd), np.diagonal(ds)
            min_diag = float(dd.min())
            for i in np.flatnonzero(dd <= diag_tol * ds)[:max_listed]:
                diag_fail.append({"rows": diag_rows[i].tolist(), "value": float(dd[i])})
        orders[r] = OrderSummary(r, int(det.size), float(det.min()), float(scaled.min()), min_diag,
                                 viol, diag_fail)
        if len(bad) > max_listed:
            orders[r].violations.append({"truncated": int(len(bad) - max_listed)})
    return TNReport(max_order, orders, enum, tol, kernel.t_grid.tolist())
