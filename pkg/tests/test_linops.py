import numpy as np
import pytest

from blockeig.linops import (
    Operator,
    block_inner,
    cholesky,
    dense_operator,
    max_abs,
    symeig,
    tri_solve_right,
)
from conftest import block_with_condition, random_spd


def test_block_inner_orthonormal_columns():
    x = np.eye(3)[:, :2]
    assert np.allclose(block_inner(x, x), np.eye(2))


def test_block_inner_scaling():
    x = np.zeros((3, 1))
    y = np.zeros((3, 1))
    x[0, 0] = 2.0
    y[0, 0] = 3.0
    assert block_inner(x, y)[0, 0] == pytest.approx(6.0)


def test_block_inner_matches_naive_loops():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 4))
    y = rng.standard_normal((50, 3))
    got = block_inner(x, y)
    for i in range(4):
        for j in range(3):
            assert got[i, j] == pytest.approx(np.dot(x[:, i], y[:, j]), rel=1e-13)


def test_block_inner_dimension_mismatch():
    with pytest.raises(ValueError):
        block_inner(np.zeros((4, 2)), np.zeros((5, 2)))


def test_symeig_diagonal_matrix():
    w, u = symeig(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [1.0, 2.0, 3.0])
    # eigenvectors are signed unit vectors permuted to ascending order
    assert np.allclose(np.abs(u), np.eye(3)[:, [1, 2, 0]])


def test_symeig_exchange_matrix():
    w, u = symeig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(w, [-1.0, 1.0])
    assert np.allclose(np.abs(u), np.full((2, 2), 1 / np.sqrt(2)))


def test_symeig_random_residual():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((12, 12))
    a = 0.5 * (a + a.T)
    w, u = symeig(a)
    assert max_abs(a @ u - u * w) <= 1e-12 * max_abs(a)
    assert max_abs(u.T @ u - np.eye(12)) <= 1e-12
    assert np.all(np.diff(w) >= 0)


def test_symeig_reconstruction():
    rng = np.random.default_rng(2)
    for n in (5, 17, 64):
        a = rng.standard_normal((n, n))
        a = 0.5 * (a + a.T)
        w, u = symeig(a)
        assert max_abs(a - (u * w) @ u.T) <= 1e-11 * max_abs(a)


def test_symeig_nonfinite_is_hard_error():
    a = np.eye(3)
    a[1, 1] = np.nan
    with pytest.raises(ValueError):
        symeig(a)


def test_cholesky_identity():
    assert np.allclose(cholesky(np.eye(4)), np.eye(4))


def test_cholesky_hand_checked_2x2():
    l = cholesky(np.array([[4.0, 2.0], [2.0, 5.0]]))
    assert np.allclose(l, [[2.0, 0.0], [1.0, 2.0]])


def test_cholesky_reports_failure_as_value():
    rng = np.random.default_rng(3)
    x = block_with_condition(200, 6, 1e9, rng)
    m = x.T @ x  # condition ~1e18: indefinite at machine precision
    assert cholesky(m) is None


def test_cholesky_nan_is_hard_error():
    m = np.eye(2)
    m[0, 0] = np.nan
    with pytest.raises(ValueError):
        cholesky(m)


def test_tri_solve_right_identity():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((7, 3))
    assert np.allclose(tri_solve_right(x, np.eye(3)), x)


def test_tri_solve_right_scalar():
    x = np.zeros((3, 1))
    x[0, 0] = 2.0
    out = tri_solve_right(x, np.array([[2.0]]))
    assert np.allclose(out[:, 0], [1.0, 0.0, 0.0])


def test_tri_solve_right_multiply_back():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((30, 5))
    l = np.tril(rng.standard_normal((5, 5))) + 5.0 * np.eye(5)
    out = tri_solve_right(x, l)
    assert max_abs(out @ l.T - x) <= 1e-13 * max_abs(x)


def test_tri_solve_right_zero_diagonal():
    l = np.eye(3)
    l[2, 2] = 0.0
    with pytest.raises(ValueError):
        tri_solve_right(np.ones((4, 3)), l)


def test_operator_apply_is_linear():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((40, 40))
    op = dense_operator(0.5 * (a + a.T))
    x = rng.standard_normal((40, 3))
    c = rng.standard_normal((3, 3))
    lhs = op.apply(x @ c)
    rhs = op.apply(x) @ c
    assert max_abs(lhs - rhs) <= 1e-12 * max_abs(rhs)


def test_operator_apply_is_symmetric():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((40, 40))
    op = dense_operator(0.5 * (a + a.T))
    x = rng.standard_normal((40, 3))
    y = rng.standard_normal((40, 4))
    lhs = block_inner(x, op.apply(y))
    rhs = block_inner(y, op.apply(x)).T
    assert max_abs(lhs - rhs) <= 1e-12 * max(max_abs(lhs), 1.0)


def test_metric_operator_positive_definite():
    rng = np.random.default_rng(8)
    b = dense_operator(random_spd(30, 1e3, rng), is_generalized_metric=True)
    for _ in range(5):
        v = rng.standard_normal((30, 1))
        assert float((v.T @ b.apply(v))[0, 0]) > 0.0


def test_operator_shape_validation():
    op = dense_operator(np.eye(5))
    with pytest.raises(ValueError):
        op.apply(np.ones((4, 2)))


def test_cholesky_qr_roundtrip_orthonormal():
    # one CholeskyQR pass leaves an orthogonality error of order eps*cond^2,
    # so the 1e-10 single-pass contract holds up to condition ~1e3
    rng = np.random.default_rng(9)
    for cond in (1e2, 1e3):
        x = block_with_condition(120, 6, cond, rng)
        l = cholesky(block_inner(x, x))
        assert l is not None
        q = tri_solve_right(x, l)
        assert max_abs(block_inner(q, q) - np.eye(6)) <= 1e-10
