"""Locally optimal block preconditioned conjugate gradient solver.

The solver maintains an orthonormal working subspace V = (X, W, P): the
current Ritz block X (its leading columns locked once converged), the
orthogonalized preconditioned residuals W, and the implicit increment
directions P.  Each iteration performs a Rayleigh-Ritz over V, rebuilds P
from the reduced-matrix eigenvector coefficients (never as an explicit
vector difference), and reuses operator applications by right-multiplying
the stored images (AX, AW, AP) with the same orthonormal coefficient
matrices that build the new vectors, so no precision is lost.

Exactly m_act = m - n_locked operator applications occur per iteration
(for the new W block), plus m for the initial block.

Generalized problems (A x = lambda B x) keep V B-orthonormal; coefficient
matrices then stay orthonormal in the Euclidean sense, so all reuse rules
carry over unchanged, and B images are maintained alongside A images.
"""

from dataclasses import dataclass, field

import numpy as np

from .linops import Operator, block_inner, max_abs, symeig, symmetrize
from .ortho import OrthoFailed, OrthoOptions, OrthoStats, ortho, ortho_against, ortho_against_b, ortho_b
from .precond import IdentityPreconditioner


@dataclass
class SolverOptions:
    """Tolerances, block sizes and mode flags for one solver run.

    The working block has m = n_sought + n_extra columns; only the first
    n_sought eigenpairs are required to converge (per-column residual RMS
    below tol_rms and max-abs below tol_max simultaneously).
    """

    n_sought: int
    n_extra: int = 5
    tol_rms: float = 1e-9
    tol_max: float = 1e-8
    max_iter: int = 100
    ortho: OrthoOptions = field(default_factory=OrthoOptions)
    generalized: bool = False
    record_trace: bool = False
    trace_rms_per_column: bool = False
    seed: int = 0
    iteration_callback: object = None

    @property
    def block_size(self):
        return self.n_sought + self.n_extra

    def validate(self, n):
        if self.n_sought < 1:
            raise ValueError("n_sought must be >= 1")
        if self.n_extra < 0:
            raise ValueError("n_extra must be >= 0")
        if 3 * self.block_size > n:
            raise ValueError(
                f"block size {self.block_size} too large: need 3*(n_sought+n_extra) <= n = {n}"
            )
        if not (self.tol_rms > 0 and self.tol_max > 0):
            raise ValueError("residual tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        self.ortho.validate()


@dataclass
class TraceRecord:
    iteration: int
    ritz_values: list
    rms: float
    max_abs: float
    locked: int
    matvecs: int
    b_matvecs: int
    ortho_passes: int
    shifts_engaged: int
    subspace_dim: int


@dataclass
class ConvergenceTrace:
    records: list = field(default_factory=list)

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def as_dicts(self):
        return [
            {
                "iter": r.iteration,
                "ritz": r.ritz_values,
                "rms": r.rms,
                "max_abs": r.max_abs,
                "locked": r.locked,
                "matvecs": r.matvecs,
                "b_matvecs": r.b_matvecs,
                "ortho_passes": r.ortho_passes,
                "shifts_engaged": r.shifts_engaged,
                "subspace_dim": r.subspace_dim,
            }
            for r in self.records
        ]


@dataclass
class SolveStats:
    iterations: int = 0
    matvecs: int = 0
    b_matvecs: int = 0
    ortho_passes: int = 0
    shift_engagements: int = 0


@dataclass
class EigenResult:
    """Converged (or best-so-far) eigenpairs plus run accounting."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    converged: bool
    stats: SolveStats
    trace: ConvergenceTrace = None


@dataclass
class SubspaceState:
    """Per-iteration view handed to the optional iteration callback.

    Arrays are the solver's working storage: treat them as read-only.
    """

    iteration: int
    x: np.ndarray
    ax: np.ndarray
    w: np.ndarray = None
    aw: np.ndarray = None
    p: np.ndarray = None
    ap: np.ndarray = None
    bx: np.ndarray = None
    ritz_values: np.ndarray = None
    n_locked: int = 0
    newly_locked: int = 0
    rms: float = 0.0
    max_abs: float = 0.0


def check_convergence(r_active, opts):
    """Per-column convergence eligibility of an active residual block.

    A column is eligible iff its RMS is <= tol_rms AND its max-abs is
    <= tol_max.  Returns (flags, rms, max_abs) where the scalars aggregate
    the whole block (block RMS by default; the max of per-column RMS when
    opts.trace_rms_per_column is set).  Locking itself freezes only a
    consecutive leading prefix of eligible columns -- see n_lockable.
    """
    r = np.asarray(r_active)
    n = r.shape[0]
    if r.shape[1] == 0:
        return np.zeros(0, dtype=bool), 0.0, 0.0
    col_rms = np.linalg.norm(r, axis=0) / np.sqrt(n)
    col_max = np.max(np.abs(r), axis=0)
    flags = (col_rms <= opts.tol_rms) & (col_max <= opts.tol_max)
    if opts.trace_rms_per_column:
        rms = float(np.max(col_rms))
    else:
        rms = float(np.linalg.norm(r) / np.sqrt(r.size))
    return flags, rms, float(np.max(col_max))


def n_lockable(flags):
    """Length of the leading all-eligible prefix (the only columns locked)."""
    for i, f in enumerate(flags):
        if not f:
            return i
    return len(flags)


def _expansion_columns(flags, skip):
    """Active columns worth a new search direction.

    Skips the newly locked prefix and any column already within tolerance:
    an eligible column stuck behind an uneligible one needs no correction,
    and its (possibly exactly zero) residual would only poison the
    orthogonalization.  The first unlocked column is uneligible by
    construction, so the selection is never empty.
    """
    return np.flatnonzero(~flags[skip:]) + skip


def build_p_coefficients(u_x, n_locked):
    """Coefficients of the unorthogonalized P block in the current subspace.

    Restricts the Ritz eigenvector matrix to the active columns and
    subtracts 1 from the diagonal entries of its leading block, so that
    V @ result equals X_new_active - X_old_active.  The restriction happens
    before any orthogonalization on purpose: P is assembled only for
    eigenvectors that have not converged.
    """
    m = u_x.shape[1]
    u_p = u_x[:, n_locked:].copy()
    for idx, j in enumerate(range(n_locked, m)):
        u_p[j, idx] -= 1.0
    return u_p


def default_guess(operator, m, seed=0):
    """Initial block: unit vectors at the m smallest diagonal entries,
    or a seeded random orthonormal block when no diagonal is available."""
    n = operator.dim
    if operator.diagonal is not None:
        idx = np.argsort(operator.diagonal, kind="stable")[:m]
        x0 = np.zeros((n, m))
        x0[idx, np.arange(m)] = 1.0
        return x0
    rng = np.random.default_rng(seed)
    return ortho(rng.standard_normal((n, m)))


def _cleanup_active_coefficients(u_act, n_locked_rows, oopts, stats):
    """Zero the locked-coordinate rows and re-orthonormalize.

    The locked vectors are literal columns of the subspace, so their
    coefficient representation is exact unit vectors; zeroing those rows
    makes the new active columns exactly orthogonal to the frozen ones.
    """
    if n_locked_rows == 0:
        return u_act
    u = u_act.copy()
    u[:n_locked_rows, :] = 0.0
    return ortho(u, oopts, stats)


def _hstack(blocks):
    blocks = [b for b in blocks if b is not None and b.shape[1] > 0]
    return blocks[0] if len(blocks) == 1 else np.hstack(blocks)


def lobpcg_solve(a, precond, x0=None, opts=None):
    """Compute the lowest eigenpairs of a symmetric operator.

    Parameters
    ----------
    a : Operator
        Symmetric operator whose lowest eigenpairs are sought.
    precond : preconditioner or None
        Applied to active residual blocks with per-column Ritz shifts;
        None means identity.
    x0 : (n, m) array, optional
        Initial block, m = opts.n_sought + opts.n_extra.  Defaults to
        unit vectors at the smallest diagonal entries.
    opts : SolverOptions

    Returns
    -------
    EigenResult with ascending eigenvalues; converged=False (with partial
    results and trace) when max_iter runs out first.
    """
    if opts is None:
        raise ValueError("SolverOptions required")
    return _lobpcg_run(a, None, precond, x0, opts)


def lobpcg_solve_generalized(a, b, precond, x0=None, opts=None):
    """Lowest eigenpairs of A x = lambda B x for symmetric A and SPD B.

    The working subspace is kept B-orthonormal; residuals are
    A x - lambda B x, and B applications are reused through the same
    orthonormal coefficient updates as A applications.
    """
    if opts is None:
        raise ValueError("SolverOptions required")
    if b is None:
        raise ValueError("metric operator b required (use lobpcg_solve otherwise)")
    return _lobpcg_run(a, b, precond, x0, opts)


def _lobpcg_run(a, b, precond, x0, opts):
    gen = b is not None
    opts.generalized = gen
    n = a.dim
    m = opts.block_size
    opts.validate(n)
    if gen and b.dim != n:
        raise ValueError("a and b dimensions differ")
    precond = precond if precond is not None else IdentityPreconditioner()
    oopts = opts.ortho
    ostats = OrthoStats()
    trace = ConvergenceTrace() if opts.record_trace else None
    matvecs = 0

    x = default_guess(a, m, opts.seed) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (n, m):
        raise ValueError(f"x0 must have shape ({n}, {m}), got {x.shape}")

    if gen:
        x, bx = ortho_b(x, b, oopts, ostats)
    else:
        x = ortho(x, oopts, ostats)
        bx = None

    ax = a.apply(x)
    matvecs += m

    red = symmetrize(block_inner(x, ax))
    w_vals, u = symeig(red)
    lam = w_vals[:m].copy()
    x = x @ u
    ax = ax @ u
    if gen:
        bx = bx @ u

    n_locked = 0
    r = ax - (bx if gen else x) * lam[None, :]
    flags, rms, mabs = check_convergence(r, opts)
    new_locks = n_lockable(flags)
    n_locked = min(new_locks, m)

    def record(it, dim):
        if trace is not None:
            trace.append(
                TraceRecord(
                    iteration=it,
                    ritz_values=[float(v) for v in lam],
                    rms=rms,
                    max_abs=mabs,
                    locked=n_locked,
                    matvecs=matvecs,
                    b_matvecs=ostats.metric_applications,
                    ortho_passes=ostats.cholesky_attempts,
                    shifts_engaged=ostats.shift_engagements,
                    subspace_dim=dim,
                )
            )

    def notify(it, new, w_blk=None, aw_blk=None, p_blk=None, ap_blk=None):
        if opts.iteration_callback is not None:
            opts.iteration_callback(
                SubspaceState(
                    iteration=it,
                    x=x,
                    ax=ax,
                    w=w_blk,
                    aw=aw_blk,
                    p=p_blk,
                    ap=ap_blk,
                    bx=bx,
                    ritz_values=lam.copy(),
                    n_locked=n_locked,
                    newly_locked=new,
                    rms=rms,
                    max_abs=mabs,
                )
            )

    def result(converged, iterations):
        stats = SolveStats(
            iterations=iterations,
            matvecs=matvecs,
            b_matvecs=ostats.metric_applications,
            ortho_passes=ostats.cholesky_attempts,
            shift_engagements=ostats.shift_engagements,
        )
        return EigenResult(
            eigenvalues=lam[: opts.n_sought].copy(),
            eigenvectors=x[:, : opts.n_sought].copy(),
            converged=converged,
            stats=stats,
            trace=trace,
        )

    record(0, m)
    notify(0, n_locked)
    if n_locked >= opts.n_sought:
        return result(True, 0)

    # first preconditioned-residual block, orthogonalized against X
    cols = _expansion_columns(flags, n_locked)
    w_tld = precond.apply(r[:, cols], lam[cols])
    try:
        if gen:
            w_blk, bw = ortho_against_b(w_tld, x, bx, b, oopts, ostats)
        else:
            w_blk = ortho_against(w_tld, x, oopts, ostats)
            bw = None
    except OrthoFailed as exc:
        raise OrthoFailed(f"initial residual block collapsed: {exc}", exc.error) from exc
    aw = a.apply(w_blk)
    matvecs += w_blk.shape[1]
    p_blk = ap = bp = None

    for it in range(1, opts.max_iter + 1):
        v = _hstack([x, w_blk, p_blk])
        av = _hstack([ax, aw, ap])
        bv = _hstack([bx, bw, bp]) if gen else None
        dim = v.shape[1]

        red = symmetrize(block_inner(v, av))
        w_vals, u = symeig(red)
        if not np.isfinite(w_vals).all():
            raise FloatingPointError("non-finite Ritz values in reduced problem")
        u_x = u[:, :m]
        nl = n_locked

        u_act = _cleanup_active_coefficients(u_x[:, nl:], nl, oopts, ostats)
        lam[nl:] = w_vals[nl:m]

        x_new = np.empty_like(x)
        ax_new = np.empty_like(ax)
        x_new[:, :nl] = x[:, :nl]
        ax_new[:, :nl] = ax[:, :nl]
        x_new[:, nl:] = v @ u_act
        ax_new[:, nl:] = av @ u_act
        if gen:
            bx_new = np.empty_like(bx)
            bx_new[:, :nl] = bx[:, :nl]
            bx_new[:, nl:] = bv @ u_act
            bx = bx_new
        x, ax = x_new, ax_new

        r = ax[:, nl:] - (bx if gen else x)[:, nl:] * lam[None, nl:]
        flags, rms, mabs = check_convergence(r, opts)
        new_locks = n_lockable(flags)
        n_locked = nl + new_locks

        record(it, dim)
        notify(it, new_locks, w_blk, aw, p_blk, ap)
        if n_locked >= opts.n_sought:
            return result(True, it)

        # P and W are assembled only for eigenvectors still above tolerance:
        # a converged column's increment is numerically zero, and
        # orthonormalizing it would inject pure roundoff directions whose
        # spurious Ritz values poison later Rayleigh-Ritz steps
        cols = _expansion_columns(flags, new_locks)

        # P coefficients live in the current subspace, so the stored images
        # transfer by the same orthonormal multiplication
        u_x_actual = np.zeros((dim, m))
        u_x_actual[:nl, :nl] = np.eye(nl)
        u_x_actual[:, nl:] = u_act
        u_p_tld = build_p_coefficients(u_x, n_locked)[:, cols - new_locks]
        try:
            u_p = ortho_against(u_p_tld, u_x_actual, oopts, ostats)
            p_next = v @ u_p
            ap_next = av @ u_p
            bp_next = bv @ u_p if gen else None
        except OrthoFailed:
            # X barely moved: run the next iteration P-less, as at startup
            p_next = ap_next = bp_next = None
        p_blk, ap, bp = p_next, ap_next, bp_next

        w_tld = precond.apply(r[:, cols], lam[nl + cols])
        q = _hstack([x, p_blk])
        try:
            if gen:
                bq = _hstack([bx, bp])
                w_blk, bw = ortho_against_b(w_tld, q, bq, b, oopts, ostats)
            else:
                w_blk = ortho_against(w_tld, q, oopts, ostats)
        except OrthoFailed as exc:
            raise OrthoFailed(f"iteration {it}: {exc}", exc.error) from exc
        aw = a.apply(w_blk)
        matvecs += w_blk.shape[1]

    return result(False, opts.max_iter)
