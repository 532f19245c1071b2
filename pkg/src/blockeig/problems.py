"""Synthetic test problems and Matrix Market I/O.

Three generator families imitate the structure of the quantum-chemistry
matrices the solvers target without any quantum-chemistry code: a sparse
diagonally dominant class (``fci_like``), a dense indefinite class built
from a prescribed spectrum (``scf_hessian_like``), and a mixed
dense-block-plus-sparse-block class (``cas_hessian_like``).  Generators
are pure functions of (spec, seed): the same spec reproduces the same
matrix bit for bit.

File input/output uses the Matrix Market text format, restricted to
``matrix coordinate real symmetric`` and square ``matrix array real
general`` files.  Values are written with 17 significant digits so a
write/read round trip reproduces entries exactly.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .linops import dense_operator, max_abs, sparse_operator, symmetrize

MAX_GEN_ENTRIES = 5e7


@dataclass(frozen=True)
class ProblemSpec:
    """Recipe for a synthetic (or file-loaded) operator.

    gap_control fixes the spectral gap between sorted eigenvalues
    gap_index-1 and gap_index; callers aiming at the convergence-relevant
    gap pass gap_index = block size.  negative_count applies to the
    hessian-like kinds only.
    """

    kind: str
    n: int = 0
    density: float = 0.01
    dominance: float = 10.0
    gap_control: float = None
    gap_index: int = None
    negative_count: int = None
    seed: int = 0
    path: str = None


def generate_problem(spec):
    if spec.kind == "fci_like":
        return gen_fci_like(spec)
    if spec.kind == "scf_hessian_like":
        return gen_indefinite_hessian(spec)
    if spec.kind == "cas_hessian_like":
        return gen_cas_hessian_like(spec)
    if spec.kind == "file":
        return read_matrix_market(spec.path)
    raise ValueError(f"unknown problem kind: {spec.kind}")


def _check_gen_spec(spec):
    if spec.n < 10:
        raise ValueError("generators need n >= 10")
    if not 0.0 <= spec.density <= 1.0:
        raise ValueError("density must be in [0, 1]")
    if spec.density * spec.n**2 > MAX_GEN_ENTRIES:
        raise ValueError("density * n^2 too large for in-memory generation")
    if spec.dominance <= 0:
        raise ValueError("dominance must be positive")


def _sample_offdiag(rng, n, density, amplitude):
    """Random strict-upper-triangle entries at roughly the requested fill."""
    target = int(round(density * n * (n - 1) / 2))
    if target == 0:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp), np.zeros(0)
    draw = min(2 * target, n * n)
    i = rng.integers(0, n, size=draw)
    j = rng.integers(0, n, size=draw)
    keep = i < j
    pairs = np.unique(np.stack([i[keep], j[keep]], axis=1), axis=0)[:target]
    vals = amplitude * rng.uniform(-1.0, 1.0, size=pairs.shape[0])
    return pairs[:, 0], pairs[:, 1], vals


def gen_fci_like(spec):
    """Sparse, diagonally dominant operator with increasing diagonal.

    Diagonal entries are evenly spaced; off-diagonal magnitudes are bounded
    by spacing/dominance, so eigenvalues track the diagonal and the
    dominance knob directly controls how strongly.
    """
    _check_gen_spec(spec)
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    delta = 1.0
    diag = 1.0 + delta * np.arange(n, dtype=np.float64)
    if spec.gap_index is not None and spec.gap_control is not None:
        if not 1 <= spec.gap_index < n:
            raise ValueError("gap_index out of range")
        diag[spec.gap_index :] += spec.gap_control - delta
    rows, cols, vals = _sample_offdiag(rng, n, spec.density, delta / spec.dominance)
    upper = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))
    a = (upper + upper.T + scipy.sparse.diags(diag)).tocsr()
    return sparse_operator(a)


def operator_from_spectrum(eigenvalues, seed=0):
    """Dense operator Q diag(eigenvalues) Q^T with a seeded random orthogonal Q.

    The sorted input spectrum is attached as ``known_spectrum`` so tests can
    assert against ground truth without a dense oracle.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=np.float64))
    n = lam.shape[0]
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = symmetrize((q * lam) @ q.T)
    op = dense_operator(a)
    op.known_spectrum = lam
    return op


def gen_indefinite_hessian(spec):
    """Dense, non diagonally dominant operator with a prescribed spectrum.

    A configurable count of negative eigenvalues models a far-from-converged
    orbital Hessian; the positive part is closely spaced, with the gap at
    gap_index adjustable.  The random orthogonal eigenbasis spreads every
    eigenvalue across the whole diagonal, which destroys diagonal dominance.
    """
    _check_gen_spec(spec)
    n = spec.n
    neg = spec.negative_count if spec.negative_count is not None else max(1, n // 10)
    if not 0 <= neg < n:
        raise ValueError("negative_count out of range")
    lam_neg = np.linspace(-2.0, -0.5, neg) if neg else np.zeros(0)
    lam_pos = 0.1 + 0.02 * np.arange(n - neg, dtype=np.float64)
    lam = np.concatenate([lam_neg, lam_pos])
    if spec.gap_index is not None and spec.gap_control is not None:
        if not 1 <= spec.gap_index < n:
            raise ValueError("gap_index out of range")
        lam[spec.gap_index :] += spec.gap_control - (lam[spec.gap_index] - lam[spec.gap_index - 1])
    return operator_from_spectrum(lam, seed=spec.seed)


def gen_cas_hessian_like(spec):
    """Ill-conditioned SPD block coupled to a sparse dominant block.

    The leading block is not diagonally dominant in any useful sense: its
    low eigenvectors are global modes invisible to the diagonal, while its
    order-one off-diagonal entries all survive magnitude thresholding, so a
    thresholded approximation of the matrix captures it exactly and stays
    positive definite.  The trailing block sits higher in the spectrum and
    is diagonally dominant with sub-threshold couplings.  The lowest
    eigenpair therefore lives in the hard leading block.
    """
    _check_gen_spec(spec)
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    nd = 2 * max(5, n // 16)
    a = np.zeros((n, n))

    # weighted graph Laplacian plus a small floor: positive definite with a
    # delocalized smooth ground mode at exactly the floor value, every
    # off-diagonal entry above the usual 0.5 threshold, and a diagonal
    # (vertex degrees) that says little about the low end of the spectrum
    w = np.zeros((nd, nd))
    ring = np.arange(nd)
    w[ring, (ring + 1) % nd] = 0.6 + 0.6 * rng.uniform(size=nd)
    rows, cols, vals = _sample_offdiag(rng, nd, 4.0 / nd, 1.0)
    w[rows, cols] = 0.6 + 0.6 * np.abs(vals)
    w = np.maximum(w, w.T)
    orb = np.diag(w.sum(axis=1)) - w + 0.05 * np.eye(nd)
    a[:nd, :nd] = orb

    nc = n - nd
    diag_ci = 5.0 + 0.5 * np.arange(nc, dtype=np.float64)
    rows, cols, vals = _sample_offdiag(rng, nc, spec.density, 0.5 / spec.dominance)
    ci = np.zeros((nc, nc))
    ci[rows, cols] = vals
    ci = ci + ci.T
    np.fill_diagonal(ci, diag_ci)
    a[nd:, nd:] = ci

    crow, ccol, cval = _sample_offdiag(rng, n, min(spec.density, 0.05), 0.05)
    cross = (crow < nd) & (ccol >= nd)
    a[crow[cross], ccol[cross]] = cval[cross]
    a[ccol[cross], crow[cross]] = cval[cross]
    return dense_operator(a)


# ---------------------------------------------------------------------------
# Matrix Market


def _mm_fail(path, lineno, msg):
    raise ValueError(f"{path}:{lineno}: {msg}")


def read_matrix_market(path):
    """Load an operator from a Matrix Market file.

    Accepts ``matrix coordinate real symmetric`` (lower triangle stored,
    1-indexed) and square ``matrix array real general`` files; anything
    else is a parse error carrying the offending line number.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        _mm_fail(path, 1, "empty file")
    header = lines[0].split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        _mm_fail(path, 1, "malformed Matrix Market header")
    obj, fmt, fieldtype, symmetry = (t.lower() for t in header[1:])
    if obj != "matrix" or fieldtype != "real":
        _mm_fail(path, 1, f"unsupported object/field: {obj} {fieldtype}")
    if (fmt, symmetry) not in (("coordinate", "symmetric"), ("array", "general")):
        _mm_fail(path, 1, f"unsupported format: {fmt} {symmetry}")

    body = [
        (i + 1, ln) for i, ln in enumerate(lines) if i > 0 and ln.strip() and not ln.lstrip().startswith("%")
    ]
    if not body:
        _mm_fail(path, len(lines), "missing size line")
    sizeno, sizeline = body[0]
    entries = body[1:]

    if fmt == "coordinate":
        parts = sizeline.split()
        if len(parts) != 3:
            _mm_fail(path, sizeno, "coordinate size line needs 'rows cols nnz'")
        try:
            nrows, ncols, nnz = (int(p) for p in parts)
        except ValueError:
            _mm_fail(path, sizeno, "non-integer size entry")
        if nrows != ncols:
            _mm_fail(path, sizeno, "matrix must be square")
        if len(entries) != nnz:
            _mm_fail(path, sizeno, f"declared {nnz} entries, found {len(entries)}")
        rows = np.empty(nnz, dtype=np.intp)
        cols = np.empty(nnz, dtype=np.intp)
        vals = np.empty(nnz)
        for k, (lineno, ln) in enumerate(entries):
            parts = ln.split()
            if len(parts) != 3:
                _mm_fail(path, lineno, "coordinate entry needs 'i j value'")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                _mm_fail(path, lineno, "malformed coordinate entry")
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                _mm_fail(path, lineno, f"index ({i}, {j}) out of range")
            if i < j:
                _mm_fail(path, lineno, "symmetric files store the lower triangle only")
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
        lower = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
        strict = scipy.sparse.tril(lower, k=-1)
        return sparse_operator((lower + strict.T).tocsr())

    parts = sizeline.split()
    if len(parts) != 2:
        _mm_fail(path, sizeno, "array size line needs 'rows cols'")
    try:
        nrows, ncols = int(parts[0]), int(parts[1])
    except ValueError:
        _mm_fail(path, sizeno, "non-integer size entry")
    if nrows != ncols:
        _mm_fail(path, sizeno, "matrix must be square")
    if len(entries) != nrows * ncols:
        _mm_fail(path, sizeno, f"declared {nrows * ncols} values, found {len(entries)}")
    vals = np.empty(nrows * ncols)
    for k, (lineno, ln) in enumerate(entries):
        try:
            vals[k] = float(ln)
        except ValueError:
            _mm_fail(path, lineno, "malformed array value")
    a = vals.reshape((ncols, nrows)).T  # file is column-major
    if max_abs(a - a.T) > 1e-12 * max(max_abs(a), 1.0):
        raise ValueError(f"{path}: array matrix is not symmetric; solvers need symmetric operators")
    return dense_operator(symmetrize(a))


def write_matrix_market(path, matrix):
    """Write a matrix in Matrix Market text form (17 significant digits).

    Sparse input must be exactly symmetric and is stored as
    ``coordinate real symmetric`` (lower triangle); dense ndarrays are
    stored as ``array real general``.
    """
    if scipy.sparse.issparse(matrix):
        m = matrix.tocoo()
        if (abs(matrix - matrix.T)).max() != 0.0:
            raise ValueError("sparse matrix must be exactly symmetric")
        keep = m.row >= m.col
        order = np.lexsort((m.row[keep], m.col[keep]))
        rows = m.row[keep][order]
        cols = m.col[keep][order]
        vals = m.data[keep][order]
        with open(path, "w", encoding="ascii") as fh:
            fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
            fh.write(f"{m.shape[0]} {m.shape[1]} {len(vals)}\n")
            for i, j, v in zip(rows, cols, vals):
                fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
        return
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for j in range(a.shape[1]):
            for i in range(a.shape[0]):
                fh.write(f"{a[i, j]:.17g}\n")
