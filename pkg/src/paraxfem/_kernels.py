"""Hot inner loops: banded LU with optional partial pivoting, banded
mat-vec, and element scatter.

Each kernel exists twice.  The scalar-loop version is compiled with
``numba.njit`` when numba is importable and ``PARAXFEM_DISABLE_NUMBA`` is
unset; otherwise the module falls back to a pure-numpy version that
vectorizes over the band instead of looping over scalars.

Band layout (shared by both paths): a matrix ``A`` of order ``n`` with
``kl`` sub- and ``ku`` super-diagonals is stored row-aligned in an array
``W`` of shape ``(n, 2*kl + ku + 1)`` with ``A[i, j] == W[i, j - i + kl]``.
The extra ``kl`` columns on the right hold pivoting fill-in.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLE = os.environ.get("PARAXFEM_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = numba is not None and _DISABLE not in ("1", "true", "yes", "on")


def _njit(fn):
    return numba.njit(cache=True, nogil=True)(fn)


# -- numba path -------------------------------------------------------------


def _band_factor_loops(W, kl, ku, pivot, tol):
    n = W.shape[0]
    piv = np.arange(n)
    reach = kl + ku
    for k in range(n):
        p = k
        if pivot:
            big = abs(W[k, kl])
            for r in range(k + 1, min(k + kl, n - 1) + 1):
                v = abs(W[r, k - r + kl])
                if v > big:
                    big = v
                    p = r
        if abs(W[p, k - p + kl]) <= tol:
            return piv, k + 1
        piv[k] = p
        jmax = min(k + reach, n - 1)
        if p != k:
            for j in range(k, jmax + 1):
                tmp = W[k, j - k + kl]
                W[k, j - k + kl] = W[p, j - p + kl]
                W[p, j - p + kl] = tmp
        d = W[k, kl]
        for r in range(k + 1, min(k + kl, n - 1) + 1):
            m = W[r, k - r + kl] / d
            W[r, k - r + kl] = m
            if m != 0:
                for j in range(k + 1, jmax + 1):
                    W[r, j - r + kl] -= m * W[k, j - k + kl]
    return piv, 0


def _band_solve_loops(W, piv, kl, ku, b):
    n = W.shape[0]
    x = b.copy()
    for k in range(n):
        p = piv[k]
        if p != k:
            tmp = x[k]
            x[k] = x[p]
            x[p] = tmp
        for r in range(k + 1, min(k + kl, n - 1) + 1):
            x[r] -= W[r, k - r + kl] * x[k]
    reach = kl + ku
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(i + 1, min(i + reach, n - 1) + 1):
            acc -= W[i, j - i + kl] * x[j]
        x[i] = acc / W[i, kl]
    return x


def _band_matvec_loops(W, kl, ku, x, y):
    n = W.shape[0]
    for i in range(n):
        acc = y[i]
        for j in range(max(0, i - kl), min(i + ku, n - 1) + 1):
            acc += W[i, j - i + kl] * x[j]
        y[i] = acc
    return y


def _scatter_loops(W, kl, local, dofs):
    ne, nloc = dofs.shape
    for e in range(ne):
        for a in range(nloc):
            i = dofs[e, a]
            if i < 0:
                continue
            for b in range(nloc):
                j = dofs[e, b]
                if j < 0:
                    continue
                W[i, j - i + kl] += local[e, a, b]


# -- numpy path -------------------------------------------------------------


def _band_factor_numpy(W, kl, ku, pivot, tol):
    n = W.shape[0]
    piv = np.arange(n)
    reach = kl + ku
    for k in range(n):
        rows = np.arange(k, min(k + kl, n - 1) + 1)
        col = W[rows, k - rows + kl]
        p = k + int(np.argmax(np.abs(col))) if pivot else k
        if abs(W[p, k - p + kl]) <= tol:
            return piv, k + 1
        piv[k] = p
        jmax = min(k + reach, n - 1)
        js = np.arange(k, jmax + 1)
        if p != k:
            rowk = W[k, js - k + kl].copy()
            W[k, js - k + kl] = W[p, js - p + kl]
            W[p, js - p + kl] = rowk
        below = rows[1:]
        if below.size:
            m = W[below, k - below + kl] / W[k, kl]
            W[below, k - below + kl] = m
            jt = js[1:]
            if jt.size:
                upd = np.outer(m, W[k, jt - k + kl])
                W[below[:, None], jt[None, :] - below[:, None] + kl] -= upd
    return piv, 0


def _band_solve_numpy(W, piv, kl, ku, b):
    n = W.shape[0]
    x = b.copy()
    for k in range(n):
        p = piv[k]
        if p != k:
            x[k], x[p] = x[p], x[k]
        below = np.arange(k + 1, min(k + kl, n - 1) + 1)
        if below.size:
            x[below] -= W[below, k - below + kl] * x[k]
    reach = kl + ku
    for i in range(n - 1, -1, -1):
        js = np.arange(i + 1, min(i + reach, n - 1) + 1)
        acc = x[i] - np.dot(W[i, js - i + kl], x[js]) if js.size else x[i]
        x[i] = acc / W[i, kl]
    return x


def _band_matvec_numpy(W, kl, ku, x, y):
    n = W.shape[0]
    for off in range(-kl, ku + 1):
        lo, hi = max(0, -off), min(n, n - off)
        if lo < hi:
            y[lo:hi] += W[lo:hi, off + kl] * x[lo + off:hi + off]
    return y


def _scatter_numpy(W, kl, local, dofs):
    nloc = dofs.shape[1]
    rows = np.repeat(dofs[:, :, None], nloc, axis=2)
    cols = np.repeat(dofs[:, None, :], nloc, axis=1)
    keep = (rows >= 0) & (cols >= 0)
    r, c = rows[keep], cols[keep]
    np.add.at(W, (r, c - r + kl), local[keep])


if USE_NUMBA:
    band_factor = _njit(_band_factor_loops)
    band_solve = _njit(_band_solve_loops)
    band_matvec = _njit(_band_matvec_loops)
    scatter = _njit(_scatter_loops)
else:
    band_factor = _band_factor_numpy
    band_solve = _band_solve_numpy
    band_matvec = _band_matvec_numpy
    scatter = _scatter_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"

__all__ = ["band_factor", "band_solve", "band_matvec", "scatter",
           "USE_NUMBA", "BACKEND"]
