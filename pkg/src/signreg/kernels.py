"""Hot numeric loops, each with a numba route and a pure-numpy route.

Band matrices are stored in lower form: ``ab[d, j] == A[j + d, j]`` for
``0 <= d <= w``.  Both routes of every kernel return identical layouts; the
public names at the bottom dispatch on :data:`signreg._accel.USE_NUMBA`.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# banded LDL^T
# ---------------------------------------------------------------------------

def _ldlt_band_loops(ab, tol):
    w = ab.shape[0] - 1
    n = ab.shape[1]
    lb = np.zeros_like(ab)
    d = np.zeros(n)
    for j in range(n):
        k0 = max(0, j - w)
        s = ab[0, j]
        for k in range(k0, j):
            ljk = lb[j - k, k]
            s -= ljk * ljk * d[k]
        d[j] = s
        lb[0, j] = 1.0
        if not s > tol:
            return lb, d, j
        for i in range(j + 1, min(n, j + w + 1)):
            t = ab[i - j, j]
            for k in range(max(0, i - w), j):
                t -= lb[i - k, k] * lb[j - k, k] * d[k]
            lb[i - j, j] = t / s
    return lb, d, -1


def _ldlt_solve_loops(lb, d, b):
    w = lb.shape[0] - 1
    n = lb.shape[1]
    x = b.copy()
    m = x.shape[1]
    for i in range(n):
        for k in range(max(0, i - w), i):
            lik = lb[i - k, k]
            for c in range(m):
                x[i, c] -= lik * x[k, c]
    for i in range(n):
        for c in range(m):
            x[i, c] /= d[i]
    for i in range(n - 1, -1, -1):
        for k in range(i + 1, min(n, i + w + 1)):
            lki = lb[k - i, i]
            for c in range(m):
                x[i, c] -= lki * x[k, c]
    return x


def _ldlt_band_numpy(ab, tol):
    w = ab.shape[0] - 1
    n = ab.shape[1]
    lb = np.zeros_like(ab)
    d = np.zeros(n)
    # dense lower rows of L inside the band, L[j, j-w:j]
    for j in range(n):
        k0 = max(0, j - w)
        ks = np.arange(k0, j)
        lj = lb[j - ks, ks]
        s = ab[0, j] - np.dot(lj * lj, d[ks])
        d[j] = s
        lb[0, j] = 1.0
        if not s > tol:
            return lb, d, j
        for i in range(j + 1, min(n, j + w + 1)):
            kk = np.arange(max(0, i - w), j)
            t = ab[i - j, j] - np.dot(lb[i - kk, kk] * lb[j - kk, kk], d[kk])
            lb[i - j, j] = t / s
    return lb, d, -1


def _ldlt_solve_numpy(lb, d, b):
    w = lb.shape[0] - 1
    n = lb.shape[1]
    x = np.array(b, dtype=float, copy=True)
    for i in range(n):
        k0 = max(0, i - w)
        if k0 < i:
            ks = np.arange(k0, i)
            x[i] -= lb[i - ks, ks] @ x[k0:i]
    x /= d[:, None]
    for i in range(n - 1, -1, -1):
        k1 = min(n, i + w + 1)
        if i + 1 < k1:
            ks = np.arange(i + 1, k1)
            x[i] -= lb[ks - i, i] @ x[i + 1:k1]
    return x


# ---------------------------------------------------------------------------
# sign alternations
# ---------------------------------------------------------------------------

def _alternations_loops(values, zero_tol):
    count = 0
    last = 0
    nonzero = 0
    for v in values:
        if abs(v) <= zero_tol:
            continue
        nonzero += 1
        s = 1 if v > 0 else -1
        if last != 0 and s != last:
            count += 1
        last = s
    return count, nonzero


def _alternations_numpy(values, zero_tol):
    v = np.asarray(values, dtype=float)
    s = np.sign(v[np.abs(v) > zero_tol])
    return int(np.count_nonzero(s[1:] != s[:-1])), int(s.size)


# ---------------------------------------------------------------------------
# compound minors
# ---------------------------------------------------------------------------

def _minor_table_loops(a, rows, cols):
    nr, r = rows.shape
    nc = cols.shape[0]
    det = np.empty((nr, nc))
    scale = np.empty((nr, nc))
    sub = np.empty((r, r))
    for p in range(nr):
        for q in range(nc):
            sc = 1.0
            for i in range(r):
                mx = 0.0
                for j in range(r):
                    v = a[rows[p, i], cols[q, j]]
                    sub[i, j] = v
                    if abs(v) > mx:
                        mx = abs(v)
                sc *= mx
            scale[p, q] = sc
            dv = 1.0
            for k in range(r):
                piv = k
                big = abs(sub[k, k])
                for i in range(k + 1, r):
                    if abs(sub[i, k]) > big:
                        big = abs(sub[i, k])
                        piv = i
                if big == 0.0:
                    dv = 0.0
                    break
                if piv != k:
                    for j in range(r):
                        t = sub[k, j]
                        sub[k, j] = sub[piv, j]
                        sub[piv, j] = t
                    dv = -dv
                dv *= sub[k, k]
                for i in range(k + 1, r):
                    f = sub[i, k] / sub[k, k]
                    for j in range(k + 1, r):
                        sub[i, j] -= f * sub[k, j]
            det[p, q] = dv
    return det, scale


def _minor_table_numpy(a, rows, cols, chunk=64):
    nr = rows.shape[0]
    nc = cols.shape[0]
    det = np.empty((nr, nc))
    scale = np.empty((nr, nc))
    for start in range(0, nr, chunk):
        rr = rows[start:start + chunk]
        sub = a[rr[:, None, :, None], cols[None, :, None, :]]
        # batched det is not exact for 1x1 blocks
        det[start:start + chunk] = sub[..., 0, 0] if sub.shape[-1] == 1 else np.linalg.det(sub)
        scale[start:start + chunk] = np.abs(sub).max(axis=-1).prod(axis=-1)
    return det, scale


_ldlt_band_nb = njit(_ldlt_band_loops)
_ldlt_solve_nb = njit(_ldlt_solve_loops)
_alternations_nb = njit(_alternations_loops)
_minor_table_nb = njit(_minor_table_loops)


def ldlt_band(ab, tol=0.0, use_numba=None):
    """Factor a symmetric band matrix as ``L D L^T`` without pivoting.

    Returns ``(lb, d, fail)`` where ``fail`` is the index of the first pivot
    that is not above ``tol`` (``-1`` if none); factorization stops there.
    """
    ab = np.ascontiguousarray(ab, dtype=float)
    fast = USE_NUMBA if use_numba is None else use_numba
    lb, d, fail = (_ldlt_band_nb if fast else _ldlt_band_numpy)(ab, float(tol))
    return lb, d, int(fail)


def ldlt_solve(lb, d, b, use_numba=None):
    """Solve with a factor from :func:`ldlt_band`; ``b`` may be 1-D or 2-D."""
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    b2 = np.ascontiguousarray(b[:, None] if vec else b)
    fast = USE_NUMBA if use_numba is None else use_numba
    x = (_ldlt_solve_nb if fast else _ldlt_solve_numpy)(lb, d, b2)
    return x[:, 0] if vec else x


def alternations(values, zero_tol=0.0, use_numba=None):
    """Count strict sign alternations, skipping entries with ``|v| <= zero_tol``.

    Returns ``(count, number_of_nonzero_entries)``.
    """
    v = np.ascontiguousarray(values, dtype=float)
    fast = USE_NUMBA if use_numba is None else use_numba
    c, nz = (_alternations_nb if fast else _alternations_numpy)(v, float(zero_tol))
    return int(c), int(nz)


def minor_table(a, rows, cols, use_numba=None):
    """Determinants and row-max scales of ``a[rows[p]][:, cols[q]]`` for all p, q."""
    a = np.ascontiguousarray(a, dtype=float)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    fast = USE_NUMBA if use_numba is None else use_numba
    return (_minor_table_nb if fast else _minor_table_numpy)(a, rows, cols)
