import numpy as np
import pytest

from blockeig.linops import dense_operator, diagonal_operator, max_abs
from blockeig.lobpcg import (
    SolverOptions,
    build_p_coefficients,
    check_convergence,
    default_guess,
    lobpcg_solve,
    n_lockable,
)
from blockeig.ortho import OrthoOptions
from blockeig.precond import DiagonalPreconditioner, IdentityPreconditioner
from blockeig.problems import operator_from_spectrum
from conftest import random_orthonormal


def _diag_pc(op):
    return DiagonalPreconditioner(op.diagonal)


def test_diagonal_matrix_spectrum():
    op = diagonal_operator(np.arange(1.0, 101.0))
    opts = SolverOptions(n_sought=3, n_extra=5, seed=1)
    x0 = np.linalg.qr(np.random.default_rng(1).standard_normal((100, 8)))[0]
    res = lobpcg_solve(op, _diag_pc(op), x0, opts)
    assert res.converged
    assert np.allclose(res.eigenvalues, [1.0, 2.0, 3.0], atol=1e-8)
    for j in range(3):
        e = np.zeros(100)
        e[j] = 1.0
        assert min(max_abs(res.eigenvectors[:, j] - e), max_abs(res.eigenvectors[:, j] + e)) <= 1e-6


def test_random_dense_matches_full_eigensolve():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((200, 200))
    a = 0.5 * (a + a.T)
    op = dense_operator(a)
    opts = SolverOptions(n_sought=5, n_extra=5, max_iter=200)
    res = lobpcg_solve(op, _diag_pc(op), default_guess(op, 10, 0), opts)
    ref = np.linalg.eigvalsh(a)
    assert res.converged
    assert np.max(np.abs(res.eigenvalues - ref[:5])) <= 1e-8


def test_exact_eigenvector_guess_is_a_fixed_point():
    op = diagonal_operator(np.arange(1.0, 31.0))
    m = 8
    x0 = np.eye(30)[:, :m]
    opts = SolverOptions(n_sought=3, n_extra=5)
    res = lobpcg_solve(op, _diag_pc(op), x0, opts)
    assert res.converged
    assert res.stats.iterations == 0
    assert res.stats.matvecs == m  # only the initial block was ever applied


def test_check_convergence_all_zero():
    opts = SolverOptions(n_sought=2)
    flags, rms, mabs = check_convergence(np.zeros((50, 4)), opts)
    assert flags.all() and rms == 0.0 and mabs == 0.0
    assert n_lockable(flags) == 4


def test_check_convergence_prefix_rule():
    opts = SolverOptions(n_sought=3)
    r = np.zeros((50, 3))
    r[:, 1] = 1.0  # middle column unconverged
    flags, _, _ = check_convergence(r, opts)
    assert list(flags) == [True, False, True]
    assert n_lockable(flags) == 1


def test_check_convergence_requires_both_thresholds():
    opts = SolverOptions(n_sought=1)  # tol_rms 1e-9, tol_max 1e-8
    r = np.zeros((10000, 1))
    r[0, 0] = 2e-8  # rms 2e-10 passes, max-abs fails
    flags, rms, mabs = check_convergence(r, opts)
    assert rms <= opts.tol_rms
    assert mabs > opts.tol_max
    assert not flags[0]


def test_build_p_coefficients_fixed_point():
    u_x = np.vstack([np.eye(3), np.zeros((6, 3))])
    assert max_abs(build_p_coefficients(u_x, 0)) == 0.0


def test_build_p_coefficients_scalar_blocks():
    u_x = np.array([[0.5], [0.6], [0.7]])
    u_p = build_p_coefficients(u_x, 0)
    assert np.allclose(u_p[:, 0], [-0.5, 0.6, 0.7])


def test_build_p_coefficients_reconstruction():
    rng = np.random.default_rng(3)
    p, m = 12, 4
    v = random_orthonormal(40, p, rng)
    u_x = random_orthonormal(p, m, rng)
    u_p = build_p_coefficients(u_x, 0)
    x_old = v[:, :m]
    assert max_abs(v @ u_p - (v @ u_x - x_old)) <= 1e-14


def test_ritz_values_monotone():
    rng = np.random.default_rng(11)
    lam = np.sort(rng.uniform(0.0, 5.0, 150))
    op = operator_from_spectrum(lam, seed=2)
    opts = SolverOptions(n_sought=4, n_extra=5, max_iter=150, record_trace=True)
    res = lobpcg_solve(op, _diag_pc(op), default_guess(op, 9, 5), opts)
    recs = res.trace.records
    assert len(recs) >= 3
    for prev, cur in zip(recs, recs[1:]):
        for i in range(opts.n_sought):
            slack = 1e-10 * (1.0 + abs(prev.ritz_values[i]))
            assert cur.ritz_values[i] <= prev.ritz_values[i] + slack


def test_subspace_orthonormality_each_iteration():
    rng = np.random.default_rng(13)
    lam = np.sort(rng.uniform(0.0, 8.0, 120))
    op = operator_from_spectrum(lam, seed=4)
    tau = 1e-14
    worst = []

    def cb(state):
        blocks = [state.x] + [b for b in (state.w, state.p) if b is not None]
        v = np.hstack(blocks)
        worst.append(max_abs(v.T @ v - np.eye(v.shape[1])))

    opts = SolverOptions(n_sought=3, n_extra=4, max_iter=120, iteration_callback=cb)
    res = lobpcg_solve(op, _diag_pc(op), default_guess(op, 7, 1), opts)
    assert res.converged
    assert max(worst) <= 10 * tau


def test_operator_application_reuse_stays_faithful():
    # ill-conditioned spectrum, forced to run long by a tiny tolerance;
    # the stored images must track fresh applications throughout
    lam = np.concatenate([np.logspace(-6, 0, 60), np.linspace(1.5, 3.0, 40)])
    op = operator_from_spectrum(lam, seed=8)
    a1 = np.abs(op.matrix).sum(axis=0).max()  # ||A||_1
    drift = []

    def cb(state):
        drift.append(max_abs(state.ax - op.apply(state.x)))
        if state.w is not None:
            drift.append(max_abs(state.aw - op.apply(state.w)))
        if state.p is not None:
            drift.append(max_abs(state.ap - op.apply(state.p)))

    opts = SolverOptions(
        n_sought=2, n_extra=3, tol_rms=1e-16, tol_max=1e-16, max_iter=100, iteration_callback=cb
    )
    res = lobpcg_solve(op, _diag_pc(op), default_guess(op, 5, 2), opts)
    assert not res.converged  # tolerance is unreachable by design
    assert res.stats.iterations == 100
    assert max(drift) <= 1e-10 * a1


def test_locked_columns_bitwise_frozen():
    rng = np.random.default_rng(17)
    lam = np.concatenate([[0.0], np.sort(rng.uniform(3.0, 6.0, 99))])
    op = operator_from_spectrum(lam, seed=3)
    snapshots = {}
    violations = []

    def cb(state):
        for j in range(state.n_locked):
            if j in snapshots:
                if not np.array_equal(snapshots[j], state.x[:, j]):
                    violations.append((state.iteration, j))
            else:
                snapshots[j] = state.x[:, j].copy()

    opts = SolverOptions(n_sought=3, n_extra=4, max_iter=200, iteration_callback=cb)
    res = lobpcg_solve(op, _diag_pc(op), default_guess(op, 7, 9), opts)
    assert res.converged
    assert snapshots  # locking actually happened
    assert violations == []


def test_deep_convergence_to_near_machine_precision():
    rng = np.random.default_rng(19)
    a = np.diag(np.linspace(1.0, 10.0, 100)) + 0.05 * rng.standard_normal((100, 100))
    a = 0.5 * (a + a.T)
    op = dense_operator(a)
    opts = SolverOptions(
        n_sought=3, n_extra=5, tol_rms=1e-13, tol_max=1e-12, max_iter=100, record_trace=True
    )
    res = lobpcg_solve(op, _diag_pc(op), default_guess(op, 8, 0), opts)
    assert res.converged
    ref = np.linalg.eigvalsh(a)
    assert np.max(np.abs(res.eigenvalues - ref[:3])) <= 1e-11
    recs = res.trace.records
    for prev, cur in zip(recs, recs[1:]):
        for i in range(3):
            assert cur.ritz_values[i] <= prev.ritz_values[i] + 1e-10 * (1 + abs(prev.ritz_values[i]))


def test_matvec_count_is_active_block_width():
    rng = np.random.default_rng(23)
    lam = np.sort(rng.uniform(0.0, 6.0, 140))
    lam[5:] += 0.5  # clean gap at the block boundary
    op = operator_from_spectrum(lam, seed=6)
    opts = SolverOptions(n_sought=2, n_extra=3, max_iter=200, record_trace=True)
    res = lobpcg_solve(op, _diag_pc(op), default_guess(op, 5, 4), opts)
    assert res.converged
    recs = res.trace.records
    m = opts.block_size
    assert recs[0].matvecs == m
    for prev, cur in zip(recs, recs[1:]):
        # the W block built after `prev` has at most m - locked columns
        assert cur.matvecs - prev.matvecs <= m - prev.locked


def test_trace_rms_matches_recomputed_residuals():
    op = operator_from_spectrum(np.linspace(0.0, 5.0, 90), seed=12)
    states = []
    opts = SolverOptions(
        n_sought=2, n_extra=3, max_iter=200, record_trace=True, iteration_callback=states.append
    )
    res = lobpcg_solve(op, _diag_pc(op), default_guess(op, 5, 7), opts)
    assert res.converged
    for state, rec in zip(states, res.trace.records):
        nl = state.n_locked - state.newly_locked
        r = state.ax[:, nl:] - state.x[:, nl:] * state.ritz_values[None, nl:]
        rms = np.linalg.norm(r) / np.sqrt(r.size)
        assert abs(rms - rec.rms) <= 1e-12 * (1.0 + rms)


def test_partial_results_on_max_iter():
    op = operator_from_spectrum(np.linspace(0.0, 1.0, 90), seed=5)
    opts = SolverOptions(n_sought=3, n_extra=3, max_iter=2, record_trace=True)
    res = lobpcg_solve(op, IdentityPreconditioner(), default_guess(op, 6, 3), opts)
    assert not res.converged
    assert res.eigenvalues.shape == (3,)
    assert res.eigenvectors.shape == (90, 3)
    assert len(res.trace.records) == 3  # iterations 0..2


def test_options_validation():
    op = diagonal_operator(np.arange(1.0, 13.0))
    with pytest.raises(ValueError):
        lobpcg_solve(op, None, None, SolverOptions(n_sought=2, n_extra=3))  # 3m > n
    with pytest.raises(ValueError):
        SolverOptions(n_sought=0).validate(100)
    with pytest.raises(ValueError):
        SolverOptions(n_sought=1, tol_rms=-1.0).validate(100)
    with pytest.raises(ValueError):
        OrthoOptions(max_shift_attempts=0).validate()


def test_default_guess_uses_smallest_diagonal_entries():
    d = np.array([5.0, 1.0, 3.0, 0.5, 2.0, 6.0, 7.0, 8.0, 9.0, 10.0])
    op = diagonal_operator(d)
    x0 = default_guess(op, 3, 0)
    picked = [int(np.argmax(x0[:, j])) for j in range(3)]
    assert picked == [3, 1, 4]  # diagonal entries 0.5, 1.0, 2.0


def test_identity_preconditioner_still_converges():
    # well separated spectrum (gap >= 1): plain locally optimal block
    # steepest descent must converge within 3x the diagonal-preconditioned count
    rng = np.random.default_rng(29)
    a = np.diag(np.arange(1.0, 91.0, 1.0)) + 0.1 * rng.standard_normal((90, 90))
    a = 0.5 * (a + a.T)
    op = dense_operator(a)
    x0 = default_guess(op, 6, 0)
    opts = lambda: SolverOptions(n_sought=2, n_extra=4, max_iter=300)
    res_diag = lobpcg_solve(op, _diag_pc(op), x0, opts())
    res_id = lobpcg_solve(op, IdentityPreconditioner(), x0, opts())
    assert res_diag.converged and res_id.converged
    assert res_id.stats.iterations <= 3 * max(res_diag.stats.iterations, 1)
