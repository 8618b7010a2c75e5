"""Independent reference solutions used by the tests."""

import numpy as np


def cantilever_green(t, s):
    """Closed-form kernel of y'''' = delta_s, y(0) = y'(0) = 0, y''(1) = y'''(1) = 0."""
    t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
    lo, hi = np.minimum(t, s), np.maximum(t, s)
    return lo**2 * (3 * hi - lo) / 6


def fd_foundation_green(k: float, n: int, t_idx, s_idx) -> np.ndarray:
    """Green samples of ``y'''' + k y`` clamped at 0, free at 1, by finite differences.

    Energy discretization on ``n`` uniform intervals: second differences at
    nodes 0..n-1 (a ghost node mirrors y_1 to impose y'(0) = 0) with trapezoid
    weights, and ``k y^2`` with trapezoid weights.  The free end needs no
    condition.  ``t_idx``/``s_idx`` are node indices; returns ``G[t, s]``.
    """
    h = 1.0 / n
    m = n  # unknowns y_1..y_n
    d2 = np.zeros((n, m))
    # node 0: (y_{-1} - 2 y_0 + y_1) / h^2 with y_{-1} = y_1, y_0 = 0
    d2[0, 0] = 2.0
    for i in range(1, n):
        # column c holds y_{c+1}
        if i >= 2:
            d2[i, i - 2] = 1.0
        d2[i, i - 1] = -2.0
        d2[i, i] = 1.0
    d2 /= h**2
    w2 = np.full(n, h)
    w2[0] = h / 2
    w0 = np.full(m, h)
    w0[-1] = h / 2
    a = d2.T @ (w2[:, None] * d2) + np.diag(k * w0)
    rhs = np.zeros((m, len(s_idx)))
    for j, s in enumerate(s_idx):
        rhs[s - 1, j] = 1.0
    y = np.linalg.solve(a, rhs)
    full = np.vstack([np.zeros((1, len(s_idx))), y])
    return full[np.asarray(t_idx)]


def threepoint_exact(dps: int = 40):
    """Exact solution of y'''' + y = 1 with the point conditions written out.

    Conditions: y(0) = y'(0) = 0; y, y', y'' continuous at 1/2;
    y'''(1/2+) - y'''(1/2-) + y(1/2) = 0; y''(1) + y'(1) + y(1) = 0;
    y'''(1) - y'(1) - y(1) = 0.  Each piece is 1 plus a combination of
    exp(+-x/sqrt2) cos, sin(x/sqrt2).  Returns ``y(x, d, side)`` as floats.
    """
    import mpmath as mp

    mp.mp.dps = dps
    r = 1 / mp.sqrt(2)

    def basis(x, d):
        out = []
        for s in (1, -1):
            lam = r * (s + 1j)
            z = lam**d * mp.exp(lam * x)
            out += [mp.re(z), mp.im(z)]
        return out

    z4 = [0] * 4
    half = mp.mpf(1) / 2
    rows = [(basis(0, 0), z4, -1), (basis(0, 1), z4, 0)]
    rows += [(basis(half, d), [-v for v in basis(half, d)], 0) for d in (0, 1, 2)]
    rows.append(([-a + c for a, c in zip(basis(half, 3), basis(half, 0))], basis(half, 3), -1))
    rows.append((z4, [a + b + c for a, b, c in zip(basis(1, 2), basis(1, 1), basis(1, 0))], -1))
    rows.append((z4, [a - b - c for a, b, c in zip(basis(1, 3), basis(1, 1), basis(1, 0))], 1))
    A = mp.matrix(8, 8)
    rhs = mp.matrix(8, 1)
    for i, (left, right, v) in enumerate(rows):
        for j in range(4):
            A[i, j], A[i, 4 + j] = left[j], right[j]
        rhs[i] = v
    c = mp.lu_solve(A, rhs)
    cl, cr = [c[i] for i in range(4)], [c[4 + i] for i in range(4)]

    def y(x, d=0, side="left"):
        coef = cl if x < 0.5 or (x == 0.5 and side == "left") else cr
        return float((1 if d == 0 else 0) + sum(ci * bi for ci, bi in zip(coef, basis(mp.mpf(x), d))))

    return y


def fe_eigenloads(fact, count: int):
    """Loads ``lambda_j phi_j`` from the discrete eigenproblem ``K u = lambda M u``.

    ``phi_j`` has exactly j sign changes, so the response ``phi_j`` exercises
    every level of the interlacing chains.  Returns a list of SampledFunction.
    """
    from signreg.fem import FiniteElementFunction, assemble_term, sample_grid
    from signreg.problem import GeneralizedCoefficient, Problem, ScalarCoefficient
    from signreg.signs import SampledFunction

    op = fact.operator
    one = ScalarCoefficient.constant(1.0)
    mass = assemble_term(Problem(one, h=GeneralizedCoefficient(one)), op.mesh, "h")
    c = np.linalg.cholesky(mass)
    ci = np.linalg.inv(c)
    lam, v = np.linalg.eigh(ci @ op.dense() @ ci.T)
    u = ci.T @ v
    x = sample_grid(op.mesh, 16)
    out = []
    for j in range(count):
        phi = FiniteElementFunction(op.mesh, u[:, j].reshape(-1, 2))
        out.append(SampledFunction(x, lam[j] * phi(x)))
    return out


def qhat_oracle(p_expr, sigma_expr, nodes):
    """Full-space matrix of <q^, u' v'> from the closed form, integrated exactly.

    <q^, w> = int 2p [2 (sigma')^2 - sigma sigma''] w + int p (sigma^2)' w'
    (no q part here), with w = phi_i' phi_j' on each element.
    """
    import sympy as sp

    x = sp.symbols("x")
    s1, s2 = sp.diff(sigma_expr, x), sp.diff(sigma_expr, x, 2)
    mass = 2 * p_expr * (2 * s1**2 - sigma_expr * s2)
    flux = p_expr * sp.diff(sigma_expr**2, x)
    n = len(nodes)
    out = np.zeros((2 * n, 2 * n))
    for e in range(n - 1):
        a, b = sp.Rational(nodes[e]), sp.Rational(nodes[e + 1])
        h = b - a
        xi = (x - a) / h
        basis = [1 - 3 * xi**2 + 2 * xi**3, h * (xi - 2 * xi**2 + xi**3), 3 * xi**2 - 2 * xi**3, h * (xi**3 - xi**2)]
        d = [sp.diff(f, x) for f in basis]
        idx = [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3]
        for i in range(4):
            for j in range(i, 4):
                w = d[i] * d[j]
                val = sp.integrate(sp.expand(mass * w + flux * sp.diff(w, x)), (x, a, b))
                out[idx[i], idx[j]] += float(val)
                if i != j:
                    out[idx[j], idx[i]] += float(val)
    return out
