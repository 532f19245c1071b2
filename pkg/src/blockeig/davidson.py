"""Block Davidson baseline with a capped expansion subspace.

The expansion basis grows by the orthogonalized preconditioned residuals
of the active block each iteration; Rayleigh-Ritz runs over the whole
basis (locked converged eigenvectors are held as its frozen leading
columns).  When the basis would outgrow max_space_per_root vectors per
block column, it restarts: compressed to the current Ritz vectors
(optionally plus the previous iterate's, see DavidsonOptions.restart_keep)
and re-orthonormalized, with the stored operator images carried through
the compression so restarts cost no extra applications.

Convergence checks, locking, preconditioner shifts and the coefficient
trickery for reusing operator applications are shared with the LOBPCG
module.
"""

from dataclasses import dataclass

import numpy as np

from .linops import block_inner, max_abs, symeig, symmetrize
from .lobpcg import (
    ConvergenceTrace,
    EigenResult,
    SolveStats,
    SolverOptions,
    SubspaceState,
    TraceRecord,
    _cleanup_active_coefficients,
    _expansion_columns,
    check_convergence,
    default_guess,
    n_lockable,
)
from .ortho import OrthoFailed, OrthoStats, ortho, ortho_against
from .precond import IdentityPreconditioner


@dataclass
class DavidsonOptions(SolverOptions):
    """Davidson adds the subspace cap (vectors kept per sought root) and the
    number of Ritz-vector generations retained on restart.

    restart_keep=1 is the conventional collapse to the current Ritz
    vectors; restart_keep=2 additionally keeps the previous iterate's Ritz
    vectors, which reproduces the LOBPCG three-term subspace when the cap
    is 3 (the two solvers then converge in lockstep).
    """

    max_space_per_root: int = 25
    restart_keep: int = 1

    def validate(self, n):
        super().validate(n)
        if self.max_space_per_root < 2:
            raise ValueError("max_space_per_root must be >= 2")
        if not self.restart_keep < self.max_space_per_root:
            raise ValueError("restart_keep must be < max_space_per_root")


def _refresh_pair(u, au, oopts, stats):
    """Re-orthonormalize u, dragging au through the same triangular solves.

    Check-first: an already orthonormal basis is returned bitwise
    unchanged, which preserves exact Ritz values across compressions.
    """
    from .ortho import _factor_with_shifts
    from .linops import tri_solve_right

    eye = np.eye(u.shape[1])
    for _ in range(oopts.max_refine_rounds):
        m = block_inner(u, u)
        err = max_abs(m - eye)
        if err <= oopts.tau_ortho:
            return u, au
        l, _ = _factor_with_shifts(m, float(np.linalg.norm(u)), oopts, stats)
        u = tri_solve_right(u, l)
        au = tri_solve_right(au, l)
        stats.refine_rounds += 1
    raise OrthoFailed(f"basis refresh not converging (error {err:.3e})", error=err)


def _completion(c):
    """Orthonormal basis of the complement of span(c) in its row space."""
    s, k = c.shape
    q, _ = np.linalg.qr(np.hstack([c, np.eye(s)]))
    return q[:, k:s]


def davidson_solve(a, precond, x0=None, opts=None):
    """Block Davidson iteration for the lowest eigenpairs of a symmetric operator.

    Same contract as lobpcg_solve; opts is a DavidsonOptions.  Basis width
    (locked plus expansion columns) never exceeds
    min(max_space_per_root * block_size, n).
    """
    if opts is None:
        raise ValueError("DavidsonOptions required")
    n = a.dim
    m = opts.block_size
    opts.validate(n)
    precond = precond if precond is not None else IdentityPreconditioner()
    oopts = opts.ortho
    ostats = OrthoStats()
    trace = ConvergenceTrace() if opts.record_trace else None
    matvecs = 0
    cap_total = min(opts.max_space_per_root * m, n)

    x = default_guess(a, m, opts.seed) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (n, m):
        raise ValueError(f"x0 must have shape ({n}, {m}), got {x.shape}")

    u_basis = ortho(x, oopts, ostats)
    au_basis = a.apply(u_basis)
    matvecs += m

    locked = np.zeros((n, 0))
    alocked = np.zeros((n, 0))
    lam_lock = np.zeros(0)
    prev_cu = None

    def record(it, lam_full, rms, mabs, n_locked, dim):
        if trace is not None:
            trace.append(
                TraceRecord(
                    iteration=it,
                    ritz_values=[float(v) for v in lam_full],
                    rms=rms,
                    max_abs=mabs,
                    locked=n_locked,
                    matvecs=matvecs,
                    b_matvecs=0,
                    ortho_passes=ostats.cholesky_attempts,
                    shifts_engaged=ostats.shift_engagements,
                    subspace_dim=dim,
                )
            )

    def result(converged, iterations, lam_full, x_full):
        stats = SolveStats(
            iterations=iterations,
            matvecs=matvecs,
            b_matvecs=0,
            ortho_passes=ostats.cholesky_attempts,
            shift_engagements=ostats.shift_engagements,
        )
        return EigenResult(
            eigenvalues=np.asarray(lam_full[: opts.n_sought]).copy(),
            eigenvectors=x_full[:, : opts.n_sought].copy(),
            converged=converged,
            stats=stats,
            trace=trace,
        )

    for it in range(opts.max_iter + 1):
        nl = locked.shape[1]
        s = np.hstack([locked, u_basis]) if nl else u_basis
        a_s = np.hstack([alocked, au_basis]) if nl else au_basis
        dim = s.shape[1]
        assert dim <= cap_total, "basis width exceeded the configured cap"

        red = symmetrize(block_inner(s, a_s))
        w_vals, u = symeig(red)
        u_act = _cleanup_active_coefficients(u[:, nl:m], nl, oopts, ostats)
        lam_act = w_vals[nl:m]
        x_act = s @ u_act
        ax_act = a_s @ u_act

        r = ax_act - x_act * lam_act[None, :]
        flags, rms, mabs = check_convergence(r, opts)
        new = n_lockable(flags)
        lam_full = np.concatenate([lam_lock, lam_act])
        x_full = np.hstack([locked, x_act]) if nl else x_act
        n_locked = nl + new
        record(it, lam_full, rms, mabs, n_locked, dim)
        if opts.iteration_callback is not None:
            opts.iteration_callback(
                SubspaceState(
                    iteration=it,
                    x=x_full,
                    ax=np.hstack([alocked, ax_act]) if nl else ax_act,
                    ritz_values=lam_full,
                    n_locked=n_locked,
                    newly_locked=new,
                    rms=rms,
                    max_abs=mabs,
                )
            )

        if n_locked >= opts.n_sought:
            return result(True, it, lam_full, x_full)
        if it == opts.max_iter:
            return result(False, it, lam_full, x_full)

        cu = u_act[nl:, :]
        if new:
            locked = np.hstack([locked, x_act[:, :new]])
            alocked = np.hstack([alocked, ax_act[:, :new]])
            lam_lock = np.concatenate([lam_lock, lam_act[:new]])
            comp = _completion(cu[:, :new])
            u_basis = u_basis @ comp
            au_basis = au_basis @ comp
            cu = comp.T @ cu[:, new:]
            if prev_cu is not None:
                prev_cu = comp.T @ prev_cu

        m_act = m - n_locked
        cols = _expansion_columns(flags, new)
        r_act = r[:, cols]
        shifts = lam_act[cols]

        if n_locked + u_basis.shape[1] + m_act > cap_total:
            keep = [cu]
            room = cap_total - n_locked - m_act
            if (
                prev_cu is not None
                and opts.restart_keep >= 2
                and cu.shape[1] + prev_cu.shape[1] <= room
            ):
                try:
                    keep.append(ortho_against(prev_cu, cu, oopts, ostats))
                except OrthoFailed:
                    pass
            ckeep = np.hstack(keep)
            u_basis = u_basis @ ckeep
            au_basis = au_basis @ ckeep
            u_basis, au_basis = _refresh_pair(u_basis, au_basis, oopts, ostats)
            cu = np.zeros((u_basis.shape[1], m_act))
            cu[: m_act, :] = np.eye(m_act)
            prev_cu = None

        w_tld = precond.apply(r_act, shifts)
        against = np.hstack([locked, u_basis]) if locked.shape[1] else u_basis
        try:
            w_blk = ortho_against(w_tld, against, oopts, ostats)
        except OrthoFailed as exc:
            raise OrthoFailed(f"iteration {it}: {exc}", exc.error) from exc
        aw = a.apply(w_blk)
        matvecs += w_blk.shape[1]
        u_basis = np.hstack([u_basis, w_blk])
        au_basis = np.hstack([au_basis, aw])
        prev_cu = np.vstack([cu, np.zeros((w_blk.shape[1], cu.shape[1]))])

    raise AssertionError("unreachable")
