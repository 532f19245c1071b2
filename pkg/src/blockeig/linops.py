"""Linear-operator and block-vector primitives shared by all solvers.

Block vectors are plain float64 ndarrays of shape (n, k): columns are
vectors.  An :class:`Operator` wraps an opaque symmetric block application
``Y = A @ X`` together with the optional extras the preconditioners and
guess builders want (the diagonal, a materialized matrix).

The dense kernels (:func:`symeig`, :func:`cholesky`, :func:`tri_solve_right`,
:func:`block_inner`) are thin, contract-checked wrappers over LAPACK/BLAS.
Cholesky failure is reported as a value (``None``), not an exception: the
orthogonalization routines branch on it.
"""

import numpy as np
import scipy.linalg
import scipy.sparse

from . import kernels

EPS = float(np.finfo(np.float64).eps)


def max_abs(a):
    """Max-absolute-entry norm; the default norm for all tolerance checks."""
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def symmetrize(a):
    """(a + a.T) / 2; reduced matrices lose exact symmetry at roundoff."""
    return 0.5 * (a + a.T)


class Operator:
    """Symmetric linear map available only through its action on blocks.

    Parameters
    ----------
    dim : int
        Problem size n.
    apply : callable
        Maps an (n, k) block to the (n, k) block of images.
    diagonal : array, optional
        diag(A), used by diagonal preconditioning and initial guesses.
    matrix : ndarray or scipy sparse matrix, optional
        Materialized entries, for preconditioners that need them.
    is_generalized_metric : bool
        Marks an operator used as the metric B of a generalized problem
        (must then be positive definite).
    """

    def __init__(self, dim, apply, diagonal=None, matrix=None, is_generalized_metric=False):
        self.dim = int(dim)
        if self.dim <= 0:
            raise ValueError("operator dimension must be positive")
        self._apply = apply
        self.diagonal = None if diagonal is None else np.asarray(diagonal, dtype=np.float64)
        if self.diagonal is not None and self.diagonal.shape != (self.dim,):
            raise ValueError("diagonal must have length dim")
        self.matrix = matrix
        self.is_generalized_metric = bool(is_generalized_metric)

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != self.dim:
            raise ValueError(f"block shape {x.shape} incompatible with operator dim {self.dim}")
        y = self._apply(x)
        if y.shape != x.shape:
            raise ValueError("operator application changed the block shape")
        return y


def dense_operator(a, is_generalized_metric=False):
    """Operator backed by a dense symmetric ndarray."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("dense operator needs a square matrix")
    return Operator(
        a.shape[0],
        lambda x: a @ x,
        diagonal=np.diag(a).copy(),
        matrix=a,
        is_generalized_metric=is_generalized_metric,
    )


def sparse_operator(a):
    """Operator backed by a scipy sparse matrix; matvec runs in the kernels backend."""
    a = scipy.sparse.csr_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("sparse operator needs a square matrix")
    indptr, indices, data = a.indptr, a.indices, np.asarray(a.data, dtype=np.float64)

    def apply(x):
        return kernels.csr_matvec_block(indptr, indices, data, x)

    return Operator(a.shape[0], apply, diagonal=a.diagonal(), matrix=a)


def diagonal_operator(d, is_generalized_metric=False):
    d = np.asarray(d, dtype=np.float64)
    return Operator(
        d.shape[0],
        lambda x: d[:, None] * x,
        diagonal=d.copy(),
        matrix=np.diag(d),
        is_generalized_metric=is_generalized_metric,
    )


def identity_operator(n, is_generalized_metric=False):
    return Operator(
        n,
        lambda x: x.copy(),
        diagonal=np.ones(n),
        matrix=np.eye(n),
        is_generalized_metric=is_generalized_metric,
    )


def block_inner(x, y):
    """X^T Y for two blocks over the same row space."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    return x.T @ y


def symeig(a):
    """Eigendecomposition of a (symmetrized) dense symmetric matrix.

    Returns (eigenvalues ascending, orthonormal eigenvector columns).
    Non-finite input is a hard error; LAPACK failures propagate.
    """
    a = np.asarray(a, dtype=np.float64)
    if not np.isfinite(a).all():
        raise ValueError("non-finite entries in reduced matrix")
    return np.linalg.eigh(symmetrize(a))


def cholesky(m):
    """Lower Cholesky factor of m, or None when m is not numerically SPD.

    Failure is the normal signal that the overlap is indefinite at machine
    precision; callers retry with a shifted diagonal.  NaN input raises.
    """
    m = np.asarray(m, dtype=np.float64)
    if not np.isfinite(m).all():
        raise ValueError("non-finite entries in matrix passed to cholesky")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None


def tri_solve_right(x, l):
    """X @ L^{-T} for a lower-triangular L (BLAS triangular solve)."""
    l = np.asarray(l, dtype=np.float64)
    if np.any(np.diag(l) == 0.0):
        raise ValueError("singular triangular factor (zero diagonal entry)")
    return scipy.linalg.solve_triangular(l, np.asarray(x, dtype=np.float64).T, lower=True).T
