"""Shifted-Cholesky orthonormalization with iterative refinement.

Orthonormalization of a block X runs the plain check-factor-solve loop:
compute the overlap M = X^T X, exit if it is the identity to within
``tau_ortho`` in max norm, otherwise Cholesky-factor it and replace X by
X L^{-T}.  When the factorization fails (the overlap is indefinite at
machine precision, which happens once cond(X) passes ~1/sqrt(eps)), a
small multiple of the machine epsilon times ||X||_F is added to the
diagonal, doubling on every retry, until the factorization succeeds.  No
directions are ever dropped or replaced: a block that cannot be
orthonormalized raises :class:`OrthoFailed` and the caller decides.

Orthogonalizing against a fixed orthonormal set Y wraps the same loop in
an outer project-then-orthonormalize iteration, because a single
projection leaves a Y-component of order eps/delta when X was within
delta of span(Y).

The B-metric variants keep the images B X consistent by reusing them
through the same triangular solves instead of reapplying B.
"""

from dataclasses import dataclass

import numpy as np

from .linops import EPS, block_inner, cholesky, max_abs, symmetrize, tri_solve_right


@dataclass
class OrthoOptions:
    """Tolerances and caps for the orthogonalization loops.

    tau_ortho is the single accuracy knob of the whole solver family;
    tau_ortho_b is the looser target used under a B inner product, where
    the attainable orthogonality degrades with cond(B).
    """

    tau_ortho: float = 1e-14
    tau_ortho_b: float = 1e-12
    shift_base_factor: float = 100.0
    max_refine_rounds: int = 10
    max_shift_attempts: int = 10
    fast_exit: bool = False

    def validate(self):
        if not self.tau_ortho > 0 or not self.tau_ortho_b > 0:
            raise ValueError("ortho tolerances must be positive")
        if self.shift_base_factor < 1:
            raise ValueError("shift_base_factor must be >= 1")
        if self.max_refine_rounds < 1 or self.max_shift_attempts < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class OrthoStats:
    """Counters accumulated across orthogonalization calls."""

    cholesky_attempts: int = 0
    shift_engagements: int = 0
    refine_rounds: int = 0
    projection_passes: int = 0
    metric_applications: int = 0

    def merge(self, other):
        self.cholesky_attempts += other.cholesky_attempts
        self.shift_engagements += other.shift_engagements
        self.refine_rounds += other.refine_rounds
        self.projection_passes += other.projection_passes
        self.metric_applications += other.metric_applications


class OrthoFailed(RuntimeError):
    """Orthonormalization did not reach the requested tolerance.

    Carries the final orthogonality error; for the against-Y variants this
    signals that the input was numerically inside span(Y).
    """

    def __init__(self, message, error=float("nan")):
        super().__init__(message)
        self.error = error


def _checked_block(x):
    x = np.array(x, dtype=np.float64, copy=True)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("expected an (n, k) block of column vectors")
    if not np.isfinite(x).all():
        raise ValueError("non-finite entries in block to orthogonalize")
    return x


def _factor_with_shifts(m, scale, opts, stats):
    """Cholesky of m, escalating diagonal shifts on failure.

    Returns (L, shifted).  The first shift is shift_base_factor*eps*scale
    with scale a Frobenius-type norm of the block; each retry doubles it.
    """
    stats.cholesky_attempts += 1
    l = cholesky(m)
    if l is not None:
        return l, False
    shift = opts.shift_base_factor * EPS * scale
    if shift == 0.0:
        shift = opts.shift_base_factor * EPS
    eye = np.eye(m.shape[0])
    for _ in range(opts.max_shift_attempts):
        stats.cholesky_attempts += 1
        stats.shift_engagements += 1
        l = cholesky(m + shift * eye)
        if l is not None:
            return l, True
        shift *= 2.0
    raise OrthoFailed(
        f"shifted Cholesky still failing after {opts.max_shift_attempts} attempts "
        f"(final shift {shift:.3e})"
    )


def ortho(x, opts=None, stats=None):
    """Orthonormalize the columns of x by iterated (shifted) Cholesky.

    Postcondition: ||X^T X - I||_max <= opts.tau_ortho, with span(X)
    preserved up to roundoff amplification.  Raises OrthoFailed when
    max_refine_rounds passes do not reach the tolerance.
    """
    opts = opts or OrthoOptions()
    stats = stats if stats is not None else OrthoStats()
    x = _checked_block(x)
    if x.shape[1] == 0:
        return x
    eye = np.eye(x.shape[1])
    err = float("inf")
    for _ in range(opts.max_refine_rounds):
        m = block_inner(x, x)
        if not np.isfinite(m).all():
            raise ValueError("non-finite overlap during orthogonalization")
        err = max_abs(m - eye)
        if err <= opts.tau_ortho:
            return x
        l, shifted = _factor_with_shifts(m, float(np.linalg.norm(x)), opts, stats)
        x = tri_solve_right(x, l)
        stats.refine_rounds += 1
        if opts.fast_exit and not shifted and 10.0 * err * err <= opts.tau_ortho:
            # one clean factorization from an almost-orthonormal overlap
            # lands within tolerance; skip the confirming recompute.
            return x
    raise OrthoFailed(
        f"orthonormality {err:.3e} above tolerance {opts.tau_ortho:.1e} "
        f"after {opts.max_refine_rounds} refinement rounds",
        error=err,
    )


def ortho_against(x, y, opts=None, stats=None):
    """Orthonormalize x against the orthonormal set y and internally.

    Loops `project out y, then ortho` until both ||Y^T X||_max and
    ||X^T X - I||_max are within tau_ortho.  An empty y degenerates to
    plain ortho.  OrthoFailed here signals x numerically inside span(y).
    """
    opts = opts or OrthoOptions()
    stats = stats if stats is not None else OrthoStats()
    if y is None or y.shape[1] == 0:
        return ortho(x, opts, stats)
    x = _checked_block(x)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must share the row dimension")
    assert max_abs(block_inner(y, y) - np.eye(y.shape[1])) <= 1e3 * opts.tau_ortho, (
        "ortho_against requires an orthonormal y"
    )
    eye = np.eye(x.shape[1])
    err = float("inf")
    for _ in range(opts.max_refine_rounds):
        yx = block_inner(y, x)
        err = max_abs(yx)
        if err <= opts.tau_ortho and max_abs(block_inner(x, x) - eye) <= opts.tau_ortho:
            return x
        x = x - y @ yx
        x = ortho(x, opts, stats)
        stats.projection_passes += 1
    raise OrthoFailed(
        f"projection against y not converging (||Y^T X|| = {err:.3e}); "
        "input is numerically inside span(y)",
        error=err,
    )


def ortho_b(x, b, opts=None, stats=None):
    """B-orthonormalize x; returns (X, BX) with BX reused, not recomputed.

    Every refinement round updates BX through the same triangular solve as
    X, so a single application of B serves the whole call.  Tolerance is
    tau_ortho_b.
    """
    opts = opts or OrthoOptions()
    stats = stats if stats is not None else OrthoStats()
    x = _checked_block(x)
    if x.shape[1] == 0:
        return x, x.copy()
    bx = b.apply(x)
    stats.metric_applications += x.shape[1]
    eye = np.eye(x.shape[1])
    err = float("inf")
    for _ in range(opts.max_refine_rounds):
        m = symmetrize(block_inner(x, bx))
        if not np.isfinite(m).all():
            raise ValueError("non-finite B-overlap during orthogonalization")
        err = max_abs(m - eye)
        if err <= opts.tau_ortho_b:
            return x, bx
        scale = float(np.sqrt(max(np.trace(m), EPS)))
        l, _ = _factor_with_shifts(m, scale, opts, stats)
        x = tri_solve_right(x, l)
        bx = tri_solve_right(bx, l)
        stats.refine_rounds += 1
    raise OrthoFailed(
        f"B-orthonormality {err:.3e} above tolerance {opts.tau_ortho_b:.1e}",
        error=err,
    )


def ortho_against_b(x, ys, bys, b, opts=None, stats=None):
    """B-orthogonalize x against ys, then B-orthonormalize; returns (X, BX).

    Stage 1 projects with the precomputed images bys (X -= Ys (BYs)^T X,
    exact for B-orthonormal ys) and Euclidean-orthonormalizes, producing a
    well-conditioned intermediate without touching B.  Stage 2 applies B
    once and B-orthonormalizes through a Cholesky whose factor is safe to
    reuse on BX.
    """
    opts = opts or OrthoOptions()
    stats = stats if stats is not None else OrthoStats()
    if ys is None or ys.shape[1] == 0:
        return ortho_b(x, b, opts, stats)
    x = _checked_block(x)
    if x.shape[0] != ys.shape[0] or ys.shape != bys.shape:
        raise ValueError("inconsistent shapes for x, ys, bys")
    eye = np.eye(x.shape[1])
    err = float("inf")
    for _ in range(opts.max_refine_rounds):
        g = block_inner(bys, x)
        err = max_abs(g)
        if err <= opts.tau_ortho and max_abs(block_inner(x, x) - eye) <= opts.tau_ortho:
            break
        x = x - ys @ g
        x = ortho(x, opts, stats)
        stats.projection_passes += 1
    else:
        raise OrthoFailed(
            f"B-projection against ys not converging (||Ys^T B X|| = {err:.3e})",
            error=err,
        )
    bx = b.apply(x)
    stats.metric_applications += x.shape[1]
    for _ in range(opts.max_refine_rounds):
        m = symmetrize(block_inner(x, bx))
        err = max_abs(m - eye)
        if err <= opts.tau_ortho_b:
            return x, bx
        scale = float(np.sqrt(max(np.trace(m), EPS)))
        l, _ = _factor_with_shifts(m, scale, opts, stats)
        x = tri_solve_right(x, l)
        bx = tri_solve_right(bx, l)
        stats.refine_rounds += 1
    raise OrthoFailed(
        f"B-orthonormality {err:.3e} above tolerance {opts.tau_ortho_b:.1e}",
        error=err,
    )
