"""Hot numeric kernels: numba-compiled loops with a pure-numpy fallback.

Three kernels dominate the non-BLAS runtime of the solvers: the sparse
block matvec behind generated operators, the clamped diagonal residual
scaling, and the per-column shifted tridiagonal solve.  Each exists in two
variants:

* ``*_numba`` -- the loop implementation compiled with ``@njit`` (``None``
  when numba is unavailable),
* ``*_numpy`` -- a vectorized (or plain-loop, for the tridiagonal solve)
  numpy implementation.

The public names (``csr_matvec_block`` etc.) bind to the numba variant when
numba imports cleanly and ``BLOCKEIG_DISABLE_NUMBA`` is unset; otherwise to
the numpy fallback.  ``benchmarks/bench_kernels.py`` compares the two paths.

Dense matrix products and factorizations are deliberately NOT here: those
go through BLAS/LAPACK via numpy/scipy, which numba would not beat.
"""

import os

import numpy as np

NUMBA_DISABLED = os.environ.get("BLOCKEIG_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
    "on",
)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    njit = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED


def _csr_matvec_block_impl(indptr, indices, data, x, out):
    n, k = out.shape
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            a = data[p]
            j = indices[p]
            for c in range(k):
                out[i, c] += a * x[j, c]
    return out


def csr_matvec_block_numpy(indptr, indices, data, x):
    """Y = A @ X for CSR-stored A and an n-by-k block X (vectorized numpy)."""
    n = indptr.shape[0] - 1
    out = np.zeros((n, x.shape[1]), dtype=np.float64)
    if data.shape[0] == 0:
        return out
    rows = np.repeat(np.arange(n), np.diff(indptr))
    np.add.at(out, rows, data[:, None] * x[indices, :])
    return out


def _diag_shift_apply_impl(diag, metric_diag, shifts, r, floor, out):
    n, k = r.shape
    for j in range(k):
        s = shifts[j]
        for i in range(n):
            d = diag[i] - s * metric_diag[i]
            if d > -floor and d < floor:
                d = floor if d >= 0.0 else -floor
            out[i, j] = r[i, j] / d
    return out


def diag_shift_apply_numpy(diag, metric_diag, shifts, r, floor):
    """R / (diag - shift*metric_diag) columnwise, denominator clamped to |.| >= floor."""
    denom = diag[:, None] - shifts[None, :] * metric_diag[:, None]
    denom = np.where(np.abs(denom) < floor, np.where(denom < 0.0, -floor, floor), denom)
    return r / denom


def _tridiag_shift_solve_impl(diag, off, shifts, r, w, ok):
    # Gaussian elimination with partial pivoting (dgtsv-style), one shifted
    # system (T - shift_j I) w_j = r_j per column.  Zero pivot -> ok[j]=False.
    n, k = r.shape
    d = np.empty(n)
    dl = np.empty(n - 1) if n > 1 else np.empty(0)
    du = np.empty(n - 1) if n > 1 else np.empty(0)
    du2 = np.empty(n - 2) if n > 2 else np.empty(0)
    b = np.empty(n)
    for j in range(k):
        s = shifts[j]
        for i in range(n):
            d[i] = diag[i] - s
            b[i] = r[i, j]
        for i in range(n - 1):
            dl[i] = off[i]
            du[i] = off[i]
        good = True
        for i in range(n - 1):
            if abs(d[i]) >= abs(dl[i]):
                if d[i] == 0.0:
                    good = False
                    break
                fact = dl[i] / d[i]
                d[i + 1] -= fact * du[i]
                b[i + 1] -= fact * b[i]
                if i < n - 2:
                    du2[i] = 0.0
            else:
                fact = d[i] / dl[i]
                d[i] = dl[i]
                tmp = d[i + 1]
                d[i + 1] = du[i] - fact * tmp
                du[i] = tmp
                if i < n - 2:
                    du2[i] = du[i + 1]
                    du[i + 1] = -fact * du[i + 1]
                tmp = b[i]
                b[i] = b[i + 1]
                b[i + 1] = tmp - fact * b[i + 1]
        if good and d[n - 1] == 0.0:
            good = False
        if not good:
            ok[j] = False
            for i in range(n):
                w[i, j] = 0.0
            continue
        ok[j] = True
        w[n - 1, j] = b[n - 1] / d[n - 1]
        if n > 1:
            w[n - 2, j] = (b[n - 2] - du[n - 2] * w[n - 1, j]) / d[n - 2]
        for i in range(n - 3, -1, -1):
            w[i, j] = (b[i] - du[i] * w[i + 1, j] - du2[i] * w[i + 2, j]) / d[i]
    return w


def tridiag_shift_solve_numpy(diag, off, shifts, r):
    """Solve (tridiag(off,diag,off) - shift_j I) w_j = r_j per column; (w, ok)."""
    w = np.empty_like(r)
    ok = np.empty(r.shape[1], dtype=np.bool_)
    _tridiag_shift_solve_impl(diag, off, shifts, r, w, ok)
    return w, ok


if USE_NUMBA:
    _csr_nb = njit(cache=True)(_csr_matvec_block_impl)
    _diag_nb = njit(cache=True)(_diag_shift_apply_impl)
    _tri_nb = njit(cache=True)(_tridiag_shift_solve_impl)

    def csr_matvec_block_numba(indptr, indices, data, x):
        out = np.zeros((indptr.shape[0] - 1, x.shape[1]), dtype=np.float64)
        return _csr_nb(indptr, indices, data, np.ascontiguousarray(x), out)

    def diag_shift_apply_numba(diag, metric_diag, shifts, r, floor):
        out = np.empty_like(r)
        return _diag_nb(diag, metric_diag, shifts, np.ascontiguousarray(r), floor, out)

    def tridiag_shift_solve_numba(diag, off, shifts, r):
        w = np.empty_like(r)
        ok = np.empty(r.shape[1], dtype=np.bool_)
        _tri_nb(diag, off, shifts, np.ascontiguousarray(r), w, ok)
        return w, ok

    csr_matvec_block = csr_matvec_block_numba
    diag_shift_apply = diag_shift_apply_numba
    tridiag_shift_solve = tridiag_shift_solve_numba
else:
    csr_matvec_block_numba = None
    diag_shift_apply_numba = None
    tridiag_shift_solve_numba = None

    def csr_matvec_block(indptr, indices, data, x):
        return csr_matvec_block_numpy(indptr, indices, data, x)

    def diag_shift_apply(diag, metric_diag, shifts, r, floor):
        return diag_shift_apply_numpy(diag, metric_diag, shifts, r, floor)

    def tridiag_shift_solve(diag, off, shifts, r):
        return tridiag_shift_solve_numpy(diag, off, shifts, r)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
