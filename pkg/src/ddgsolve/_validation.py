"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.utils import check_array

from .sparse import as_csr, is_symmetric


def check_operator(A, require_symmetric=True) -> sp.csr_matrix:
    """Square, finite, float64 CSR; optionally symmetric."""
    if not sp.issparse(A):
        A = sp.csr_matrix(check_array(A, dtype=np.float64))
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"operator must be square, got shape {A.shape}")
    if A.shape[0] == 0:
        raise ValueError("operator is empty")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("operator contains non-finite entries")
    if require_symmetric and not is_symmetric(A):
        raise ValueError("operator is not symmetric")
    return A


def check_coords(coords, num_rows: int, num_components: int = 1) -> np.ndarray:
    """Node coordinates with one row per node (``num_rows / num_components`` rows)."""
    X = check_array(coords, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] * num_components != num_rows:
        raise ValueError(f"{X.shape[0]} coordinate rows x {num_components} components "
                         f"!= {num_rows} operator rows")
    return X


def check_vectors(X, num_rows: int):
    """A vector or a block of column vectors with ``num_rows`` rows.

    Returns the 2-D array and whether the input was 1-D.
    """
    arr = np.asarray(X)
    flat = arr.ndim == 1
    M = check_array(arr[:, None] if flat else arr, dtype=np.float64)
    if M.shape[0] != num_rows:
        raise ValueError(f"expected {num_rows} rows, got {M.shape[0]}")
    return M, flat


def check_positive_int(value, name, minimum=0) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
