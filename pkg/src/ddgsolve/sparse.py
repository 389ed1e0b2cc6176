"""Sparse and dense matrix kernels shared by every other module.

Sparse matrices are ``scipy.sparse.csr_matrix`` objects kept in canonical
form (sorted column indices, no duplicates, float64).  Dense matrices are
plain 2-D numpy arrays.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from . import _kernels

__all__ = [
    "NotPositiveDefiniteError",
    "CholeskyFactor",
    "as_csr",
    "is_symmetric",
    "spmv",
    "triple_product",
    "extract_principal_submatrix",
    "cholesky_factorize",
    "qr_orthonormalize",
]

DENSE_MAX = 4096
_EPS = np.finfo(np.float64).eps


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization meets a non-positive pivot.

    Attributes
    ----------
    pivot : int
        Row (in the caller's numbering) where factorization failed.
    block : int or None
        Subdomain/block id when the failure can be localized.
    """

    def __init__(self, pivot, block=None, context=""):
        self.pivot = int(pivot)
        self.block = block
        msg = f"matrix is not positive definite (non-positive pivot at row {self.pivot})"
        if block is not None:
            msg += f" in block {block}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


def as_csr(A, copy=False) -> sp.csr_matrix:
    """Return ``A`` as a canonical float64 CSR matrix.

    Duplicate entries are summed and column indices sorted within each row.
    """
    if sp.issparse(A):
        M = sp.csr_matrix(A, dtype=np.float64, copy=copy)
    else:
        M = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    if not M.has_canonical_format:
        M.sum_duplicates()
    return M


def is_symmetric(A, tol=1e-12) -> bool:
    """Pattern and value symmetry check relative to ``max|A|``."""
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        return False
    if A.nnz == 0:
        return True
    D = (A - A.T).tocsr()
    scale = np.abs(A.data).max()
    return D.nnz == 0 or np.abs(D.data).max() <= tol * scale


def spmv(A, x) -> np.ndarray:
    """``y = A x`` with an explicit size check."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ValueError(f"spmv: matrix has {A.shape[1]} columns but vector has shape {x.shape}")
    return A @ x


def triple_product(R, A, drop_tol=1e-14) -> sp.csr_matrix:
    """Galerkin product ``R A R^T`` in canonical, exactly symmetric CSR.

    Entries below ``drop_tol * max|entry|`` are removed.
    """
    R = as_csr(R)
    A = as_csr(A)
    if R.shape[1] != A.shape[0] or A.shape[0] != A.shape[1]:
        raise ValueError(f"triple_product: R is {R.shape}, A is {A.shape}")
    B = as_csr(R @ A @ R.T)
    B = as_csr((B + B.T) * 0.5)
    if B.nnz:
        cut = drop_tol * np.abs(B.data).max()
        B.data[np.abs(B.data) < cut] = 0.0
        B.eliminate_zeros()
    return B


def extract_principal_submatrix(A, idx) -> sp.csr_matrix:
    """``A[idx][:, idx]`` for a strictly increasing index set."""
    idx = np.asarray(idx)
    if idx.ndim != 1 or (idx.size and not np.issubdtype(idx.dtype, np.integer)):
        raise ValueError("index set must be a 1-D integer array")
    if idx.size:
        if np.any(np.diff(idx) <= 0):
            raise ValueError("index set must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= A.shape[0]:
            raise ValueError(f"index set out of range for matrix with {A.shape[0]} rows")
    A = as_csr(A)
    return as_csr(A[idx][:, idx])


class CholeskyFactor:
    """Factorization ``P^T L L^T P`` of an SPD matrix.

    Three storage variants share the ``solve`` interface: ``"dense"``
    (LAPACK), ``"envelope"`` (profile storage after reverse Cuthill-McKee) and
    ``"superlu"`` (scipy's SuperLU in symmetric mode with diagonal pivots,
    used for large coarse matrices).
    """

    def __init__(self, kind, n, ordering, **data):
        self.kind = kind
        self.n = n
        self.ordering = ordering
        self._data = data

    def __repr__(self):
        return f"CholeskyFactor(kind={self.kind!r}, n={self.n})"

    @property
    def nnz(self) -> int:
        if self.kind == "dense":
            return self.n * (self.n + 1) // 2
        if self.kind == "envelope":
            return int(self._data["L"].size)
        lu = self._data["lu"]
        return int(lu.L.nnz)

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValueError(f"solve: factor has order {self.n} but right-hand side has {b.shape[0]} rows")
        if self.kind == "dense":
            x, info = lapack.dpotrs(self._data["L"], b, lower=1)
            return x
        if self.kind == "envelope":
            d = self._data
            perm = self.ordering
            if b.ndim == 1:
                x = b[perm].copy()
                _kernels.envelope_solve(d["first"], d["rowptr"], d["L"], x)
                out = np.empty_like(x)
                out[perm] = x
                return out
            return np.column_stack([self.solve(col) for col in b.T])
        return self._data["lu"].solve(b)

    def lower(self) -> np.ndarray:
        """Dense ``L`` in the factor's own ordering (small matrices only)."""
        if self.kind == "dense":
            return np.tril(self._data["L"])
        if self.kind == "envelope":
            d = self._data
            L = np.zeros((self.n, self.n))
            for i in range(self.n):
                f = d["first"][i]
                L[i, f:i + 1] = d["L"][d["rowptr"][i]:d["rowptr"][i] + i - f + 1]
            return L
        raise NotImplementedError("lower() is not available for the superlu variant")


def _pivot_tol(diag) -> float:
    n = max(len(diag), 1)
    scale = np.abs(diag).max() if len(diag) else 1.0
    return 4.0 * n * _EPS * scale


def _dense_cholesky(M) -> CholeskyFactor:
    n = M.shape[0]
    L, info = lapack.dpotrf(np.array(M, dtype=np.float64, order="F"), lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    piv = np.diag(L) ** 2
    bad = np.flatnonzero(piv <= _pivot_tol(np.diag(M)))
    if bad.size:
        raise NotPositiveDefiniteError(bad[0])
    return CholeskyFactor("dense", n, np.arange(n), L=L)


def envelope_cholesky(A) -> CholeskyFactor:
    """Envelope Cholesky after a reverse Cuthill-McKee ordering."""
    A = as_csr(A)
    n = A.shape[0]
    indptr = A.indptr.astype(np.int64)
    indices = A.indices.astype(np.int64)
    perm = _kernels.rcm_order(indptr, indices) if n else np.zeros(0, dtype=np.int64)
    first = _kernels.envelope_profile(indptr, indices, perm)
    widths = np.arange(n) - first + 1
    rowptr = np.zeros(n, dtype=np.int64)
    rowptr[1:] = np.cumsum(widths)[:-1]
    L = np.zeros(int(widths.sum()))
    bad = _kernels.envelope_factor(indptr, indices, A.data, perm, first, rowptr, L,
                                   _pivot_tol(A.diagonal()))
    if bad >= 0:
        raise NotPositiveDefiniteError(perm[bad])
    return CholeskyFactor("envelope", n, perm, first=first, rowptr=rowptr, L=L)


def _superlu_cholesky(A) -> CholeskyFactor:
    A = as_csr(A)
    n = A.shape[0]
    try:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as err:
        # SuperLU does not report where the zero pivot occurred; name the weakest diagonal
        raise NotPositiveDefiniteError(int(np.argmin(np.abs(A.diagonal()))) if n else 0,
                                       context=str(err)) from err
    if not np.array_equal(lu.perm_r, lu.perm_c):
        # off-diagonal pivoting happened: the matrix is not usable as SPD
        raise NotPositiveDefiniteError(int(np.flatnonzero(lu.perm_r != lu.perm_c)[0]))
    piv = lu.U.diagonal()
    bad = np.flatnonzero(piv <= _pivot_tol(A.diagonal()))
    if bad.size:
        # U is in permuted order: column k of U belongs to original row perm_c^-1
        inv = np.empty(n, dtype=np.int64)
        inv[lu.perm_c] = np.arange(n)
        raise NotPositiveDefiniteError(inv[bad[0]])
    return CholeskyFactor("superlu", n, np.argsort(lu.perm_c), lu=lu)


def cholesky_factorize(A, method="auto", dense_max=DENSE_MAX) -> CholeskyFactor:
    """Factor a symmetric positive definite matrix.

    Parameters
    ----------
    A : sparse matrix or ndarray
        Symmetric matrix, intended SPD.
    method : {"auto", "dense", "envelope", "superlu"}
        ``"auto"`` picks dense LAPACK up to ``dense_max`` rows and SuperLU
        beyond.

    Raises
    ------
    NotPositiveDefiniteError
        On a non-positive (or roundoff-sized) pivot.
    """
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"cholesky_factorize: matrix must be square, got {A.shape}")
    if method == "auto":
        method = "dense" if n <= dense_max else "superlu"
    if method == "dense":
        M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)
        return _dense_cholesky(M)
    if method == "envelope":
        return envelope_cholesky(A)
    if method == "superlu":
        return _superlu_cholesky(A)
    raise ValueError(f"unknown factorization method {method!r}")


def qr_orthonormalize(M, rank_tol=1e-8):
    """Orthonormal basis for the numerically full-rank column space of ``M``.

    Uses Householder QR with column pivoting; columns whose pivot magnitude
    falls below ``rank_tol`` times the largest are dropped.  Signs are chosen
    so that ``R`` has a positive diagonal.

    Returns
    -------
    Q : ndarray, shape (nrows, r)
    kept : ndarray of int
        Sorted indices of the columns of ``M`` that were kept.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] < 1:
        raise ValueError("qr_orthonormalize expects a 2-D matrix with at least one row")
    nrows, ncols = M.shape
    if ncols == 0 or not np.any(M):
        return np.zeros((nrows, 0)), np.zeros(0, dtype=np.int64)
    Q, R, piv = la.qr(M, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    r = int(np.count_nonzero(d >= rank_tol * d[0]))
    # positive diagonal of R: a constant column maps to a positive vector
    sign = np.where(np.diag(R)[:r] < 0, -1.0, 1.0)
    return Q[:, :r] * sign, np.sort(piv[:r]).astype(np.int64)
