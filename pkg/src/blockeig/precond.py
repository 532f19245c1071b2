"""Residual preconditioners: identity, diagonal, tridiagonal, sparse-threshold.

All preconditioners implement ``apply(R, shifts) -> W`` where R is the
(n, k) active residual block and shifts holds the per-column Ritz values.
Application is read-only over the factorization state, so concurrent
column solves are safe.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import kernels

log = logging.getLogger(__name__)

CLAMP_FACTOR = 1e-6
EPS_NORM = float(np.finfo(np.float64).tiny)


class IdentityPreconditioner:
    kind = "identity"

    def apply(self, r, shifts):
        return np.array(r, dtype=np.float64, copy=True)


class DiagonalPreconditioner:
    """Jacobi preconditioner W = (diag(A) - rho I)^{-1} R, columnwise shifts.

    Denominators are clamped to a minimum magnitude of
    CLAMP_FACTOR * max|diag| so a shift hitting a diagonal entry stays
    finite.  ``metric_diag`` (diag(B), generalized problems) turns the
    denominator into diag(A) - rho*diag(B).
    """

    kind = "diagonal"

    def __init__(self, diag, metric_diag=None):
        self.diag = np.ascontiguousarray(diag, dtype=np.float64)
        if metric_diag is None:
            self.metric_diag = np.ones_like(self.diag)
        else:
            self.metric_diag = np.ascontiguousarray(metric_diag, dtype=np.float64)
        self.floor = CLAMP_FACTOR * float(np.max(np.abs(self.diag)))
        if self.floor == 0.0:
            self.floor = CLAMP_FACTOR

    def apply(self, r, shifts):
        shifts = np.ascontiguousarray(shifts, dtype=np.float64)
        return kernels.diag_shift_apply(self.diag, self.metric_diag, shifts, r, self.floor)


class TridiagonalPreconditioner:
    """Solves (T - rho_j I) w_j = r_j with T the tridiagonal part of A.

    Each column goes through Gaussian elimination with partial pivoting.
    Near-singular shifted systems are retried with the shift perturbed by
    CLAMP_FACTOR * max|diag|; columns that still fail the backward check
    fall back to diagonal preconditioning (logged).
    """

    kind = "tridiagonal"

    def __init__(self, diag, off):
        self.diag = np.ascontiguousarray(diag, dtype=np.float64)
        self.off = np.ascontiguousarray(off, dtype=np.float64)
        if self.off.shape[0] != self.diag.shape[0] - 1:
            raise ValueError("off-diagonal must have length n-1")
        self.perturb = CLAMP_FACTOR * float(np.max(np.abs(self.diag)))
        if self.perturb == 0.0:
            self.perturb = CLAMP_FACTOR
        self._diag_fallback = DiagonalPreconditioner(self.diag)

    def _residual_ok(self, w, r, shifts):
        # backward check: ||(T - rho_j) w_j - r_j|| <= 1e-10 ||r_j||
        tw = self.diag[:, None] * w - shifts[None, :] * w
        if self.diag.shape[0] > 1:
            tw[:-1] += self.off[:, None] * w[1:]
            tw[1:] += self.off[:, None] * w[:-1]
        res = np.linalg.norm(tw - r, axis=0)
        return res <= 1e-10 * np.maximum(np.linalg.norm(r, axis=0), EPS_NORM)

    def apply(self, r, shifts):
        r = np.asarray(r, dtype=np.float64)
        shifts = np.ascontiguousarray(shifts, dtype=np.float64)
        w, ok = kernels.tridiag_shift_solve(self.diag, self.off, shifts, r)
        good = ok & self._residual_ok(w, r, shifts)
        if not good.all():
            bad = np.flatnonzero(~good)
            retry_shifts = shifts[bad] + self.perturb
            w2, ok2 = kernels.tridiag_shift_solve(self.diag, self.off, retry_shifts, r[:, bad])
            ok2 &= self._residual_ok(w2, r[:, bad], retry_shifts)
            w[:, bad] = w2
            still_bad = bad[~ok2]
            if still_bad.size:
                log.warning(
                    "tridiagonal solve singular for %d column(s); diagonal fallback",
                    still_bad.size,
                )
                w[:, still_bad] = self._diag_fallback.apply(r[:, still_bad], shifts[still_bad])
        return w


@dataclass
class SparseThresholdSpec:
    """Thresholds for the sparse approximate-inverse preconditioner.

    The approximation M keeps A_ij when |A_ij| > tol or i == j.  tol starts
    at tol_initial and drops to tol_refined once the residual RMS falls
    below switch_rms (callers wire switch_rms = 100 * tol_rms).
    """

    tol_initial: float = 0.5
    tol_refined: float = 0.1
    switch_rms: float = 1e-7

    def validate(self):
        if not self.tol_refined < self.tol_initial:
            raise ValueError("tol_refined must be smaller than tol_initial")


class SparseThresholdPreconditioner:
    """Factorized sparse approximation M of A, refreshed once near convergence.

    M is factorized exactly (sparse LU) per tolerance value and applied
    unshifted; a singular factorization degrades to diagonal
    preconditioning (logged).
    """

    kind = "sparse_threshold"

    def __init__(self, matrix, spec=None):
        spec = spec or SparseThresholdSpec()
        spec.validate()
        self.spec = spec
        self._a = scipy.sparse.csr_matrix(matrix)
        if self._a.shape[0] != self._a.shape[1]:
            raise ValueError("matrix must be square")
        self._diag = self._a.diagonal()
        self._diag_fallback = DiagonalPreconditioner(self._diag)
        self._tol = spec.tol_initial
        self._lu = self._factorize(self._tol)

    def thresholded(self, tol):
        """M with M_ij = A_ij if |A_ij| > tol or i == j, else 0."""
        coo = self._a.tocoo()
        keep = (np.abs(coo.data) > tol) | (coo.row == coo.col)
        return scipy.sparse.coo_matrix(
            (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=coo.shape
        ).tocsc()

    def _factorize(self, tol):
        try:
            return scipy.sparse.linalg.splu(self.thresholded(tol).tocsc())
        except RuntimeError:
            log.warning("sparse threshold factorization singular (tol=%g); diagonal fallback", tol)
            return None

    def apply(self, r, shifts):
        r = np.asarray(r, dtype=np.float64)
        rms = float(np.linalg.norm(r) / np.sqrt(r.size)) if r.size else 0.0
        if self._tol != self.spec.tol_refined and rms < self.spec.switch_rms:
            self._tol = self.spec.tol_refined
            self._lu = self._factorize(self._tol)
        if self._lu is None:
            return self._diag_fallback.apply(r, shifts)
        return self._lu.solve(r)


def make_preconditioner(kind, operator, tol_rms=1e-9, spec=None):
    """Build a preconditioner of the given kind from an operator.

    Kinds beyond "identity" need operator extras: "diagonal" the diagonal,
    "tridiagonal" and "sparse_threshold" a materialized matrix.
    """
    if kind == "identity":
        return IdentityPreconditioner()
    if kind == "diagonal":
        if operator.diagonal is None:
            raise ValueError("diagonal preconditioning needs operator.diagonal")
        return DiagonalPreconditioner(operator.diagonal)
    if operator.matrix is None:
        raise ValueError(f"{kind} preconditioning needs a materialized operator.matrix")
    if kind == "tridiagonal":
        m = operator.matrix
        if scipy.sparse.issparse(m):
            diag = m.diagonal()
            off = m.diagonal(-1)
        else:
            diag = np.diag(m).copy()
            off = np.diag(m, -1).copy()
        return TridiagonalPreconditioner(diag, off)
    if kind == "sparse_threshold":
        if spec is None:
            spec = SparseThresholdSpec(switch_rms=100.0 * tol_rms)
        return SparseThresholdPreconditioner(operator.matrix, spec)
    raise ValueError(f"unknown preconditioner kind: {kind}")
