import numpy as np


def random_orthonormal(n, k, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return q


def block_with_condition(n, k, cond, rng):
    """Tall block with prescribed 2-norm condition number (via SVD factors)."""
    u = random_orthonormal(n, k, rng)
    v = random_orthonormal(k, k, rng)
    s = np.logspace(0.0, -np.log10(cond), k)
    return (u * s) @ v.T


def random_spd(n, cond, rng):
    q = random_orthonormal(n, n, rng)
    lam = np.logspace(0.0, np.log10(cond), n)
    return (q * lam) @ q.T


def projector(x):
    """Orthogonal projector onto span(x) for a full-rank block."""
    q, _ = np.linalg.qr(x)
    return q @ q.T
