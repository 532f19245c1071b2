"""Block eigensolvers for large symmetric (and generalized) eigenvalue problems.

The package provides two matrix-free solvers behind a common interface:

* :func:`blockeig.lobpcg.lobpcg_solve` -- locally optimal block preconditioned
  conjugate gradient with shifted-Cholesky orthogonalization, locking and
  safe reuse of operator applications,
* :func:`blockeig.davidson.davidson_solve` -- a block Davidson baseline with a
  capped expansion subspace and thick restarts,

plus preconditioners (``blockeig.precond``), synthetic problem generators and
Matrix Market I/O (``blockeig.problems``) and a CLI harness (``blockeig.cli``).

Environment variables (read at import time):

* ``BLOCKEIG_NUM_THREADS`` -- default thread count for the dense kernels;
  forwarded to OMP/OpenBLAS/MKL unless those are already set.
* ``BLOCKEIG_DISABLE_NUMBA`` -- set to ``1`` to select the pure-numpy fallback
  for the hot kernels (see ``blockeig.kernels``).

Operators and solver inputs are treated as immutable; a solver run owns all of
its state, so independent runs are safe to execute concurrently.
"""

import os as _os

_nt = _os.environ.get("BLOCKEIG_NUM_THREADS")
if _nt:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _nt)
del _os, _nt

from .linops import Operator, block_inner, symeig, cholesky, tri_solve_right
from .ortho import (
    OrthoOptions,
    OrthoStats,
    OrthoFailed,
    ortho,
    ortho_against,
    ortho_b,
    ortho_against_b,
)
from .lobpcg import (
    SolverOptions,
    EigenResult,
    ConvergenceTrace,
    lobpcg_solve,
    lobpcg_solve_generalized,
    check_convergence,
)
from .davidson import DavidsonOptions, davidson_solve
from .precond import (
    IdentityPreconditioner,
    DiagonalPreconditioner,
    TridiagonalPreconditioner,
    SparseThresholdPreconditioner,
    SparseThresholdSpec,
    make_preconditioner,
)
from .problems import (
    ProblemSpec,
    generate_problem,
    gen_fci_like,
    gen_indefinite_hessian,
    gen_cas_hessian_like,
    read_matrix_market,
    write_matrix_market,
)

__version__ = "0.1.0"

__all__ = [
    "Operator",
    "block_inner",
    "symeig",
    "cholesky",
    "tri_solve_right",
    "OrthoOptions",
    "OrthoStats",
    "OrthoFailed",
    "ortho",
    "ortho_against",
    "ortho_b",
    "ortho_against_b",
    "SolverOptions",
    "EigenResult",
    "ConvergenceTrace",
    "lobpcg_solve",
    "lobpcg_solve_generalized",
    "check_convergence",
    "DavidsonOptions",
    "davidson_solve",
    "IdentityPreconditioner",
    "DiagonalPreconditioner",
    "TridiagonalPreconditioner",
    "SparseThresholdPreconditioner",
    "SparseThresholdSpec",
    "make_preconditioner",
    "ProblemSpec",
    "generate_problem",
    "gen_fci_like",
    "gen_indefinite_hessian",
    "gen_cas_hessian_like",
    "read_matrix_market",
    "write_matrix_market",
]
