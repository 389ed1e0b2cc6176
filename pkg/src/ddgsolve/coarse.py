"""DDG coarse space: piecewise-polynomial generating vectors, block-orthonormal
restriction, and Galerkin coarse operator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .partition import Partition, subdomain_adjacency
from .sparse import (
    CholeskyFactor,
    NotPositiveDefiniteError,
    as_csr,
    cholesky_factorize,
    qr_orthonormalize,
    triple_product,
)

__all__ = [
    "GeneratingBasis",
    "CoarseSpace",
    "monomial_exponents",
    "rescale_coordinates",
    "build_generating_basis",
    "build_restriction",
    "build_coarse_space",
    "coarse_correct",
    "coarsen_generators",
    "coarse_solution_error",
]

RANK_TOL = 1e-8


def monomial_exponents(d: int, p: int) -> list[tuple[int, ...]]:
    """Exponent tuples of all monomials of total degree <= p, graded lexicographic.

    Within a degree, exponents are ordered with the first coordinate's power
    descending, e.g. ``(2,0), (1,1), (0,2)``.
    """
    if p < 0:
        raise ValueError("polynomial degree must be non-negative")

    def comps(total, slots):
        if slots == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in comps(total - first, slots - 1):
                yield (first,) + rest

    return [e for t in range(p + 1) for e in comps(t, d)]


def rescale_coordinates(coords, bbox=None) -> np.ndarray:
    """Affinely map the bounding box of ``coords`` onto ``[-1, 1]^d``.

    Degenerate axes (zero extent) map to 0.
    """
    X = np.asarray(coords, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise ValueError("coordinates must be finite")
    lo, hi = (X.min(axis=0), X.max(axis=0)) if bbox is None else map(np.asarray, bbox)
    ext = hi - lo
    safe = np.where(ext > 0, ext, 1.0)
    out = 2.0 * (X - lo) / safe - 1.0
    out[:, ext <= 0] = 0.0
    return out


@dataclass
class GeneratingBasis:
    """Dense generating vectors ``F`` (n x k) with per-column labels.

    Each label is ``(component, material, exponent)``.  Columns are ordered
    material-major, then component, then monomial in graded lex order.
    """

    columns: np.ndarray
    degree: int
    num_components: int = 1
    num_materials: int = 1
    column_labels: list = field(default_factory=list)

    @property
    def shape(self):
        return self.columns.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.columns, dtype=dtype)


def build_generating_basis(coords, p: int, num_components: int = 1, material_of_node=None,
                           bbox=None) -> GeneratingBasis:
    """Monomials of rescaled nodal coordinates, per component and material.

    Parameters
    ----------
    coords : ndarray, shape (nnodes, d)
    p : int
        Polynomial degree.
    num_components : int
        Unknowns per node; rows of ``F`` follow node-major interleaving.
    material_of_node : array of int, optional
        Material id per node.  Columns for material 0 are unmasked; columns
        for material ``m >= 1`` are multiplied by the indicator of ``m``.

    Returns
    -------
    GeneratingBasis
    """
    if p < 0:
        raise ValueError("polynomial degree must be non-negative")
    if num_components < 1:
        raise ValueError("num_components must be >= 1")
    X = rescale_coordinates(coords, bbox)
    nnodes, d = X.shape
    exps = monomial_exponents(d, p)
    mono = np.ones((nnodes, len(exps)))
    for j, e in enumerate(exps):
        for axis, power in enumerate(e):
            if power:
                mono[:, j] *= X[:, axis] ** power
    if material_of_node is None:
        masks = [np.ones(nnodes)]
    else:
        mat = np.asarray(material_of_node).astype(np.int64)
        if mat.shape != (nnodes,):
            raise ValueError(f"material_of_node has shape {mat.shape}, expected ({nnodes},)")
        if mat.min() < 0:
            raise ValueError("material ids must be non-negative")
        nmat = int(mat.max()) + 1 if nnodes else 1
        masks = [np.ones(nnodes)] + [(mat == m).astype(np.float64) for m in range(1, nmat)]
    nc = num_components
    cols, labels = [], []
    for m, mask in enumerate(masks):
        for c in range(nc):
            block = np.zeros((nnodes * nc, len(exps)))
            block[c::nc] = mono * mask[:, None]
            cols.append(block)
            labels.extend((c, m, e) for e in exps)
    F = np.hstack(cols)
    return GeneratingBasis(F, p, nc, len(masks), labels)


def _part_slices(part: Partition):
    order = np.argsort(part.assignment, kind="stable")
    bounds = np.zeros(part.num_parts + 1, dtype=np.int64)
    bounds[1:] = np.cumsum(part.sizes)
    return order, bounds


def build_restriction(F, part: Partition, rank_tol: float = RANK_TOL):
    """Block-orthonormal restriction ``R0`` from ``F`` restricted to each part.

    Returns
    -------
    R0 : csr_matrix, shape (rank, n)
        Rows of part 0 first, then part 1, and so on.
    block_ranks : ndarray of int
        Rows kept per part.
    dropped : list of ndarray
        Column indices of ``F`` discarded per part.

    Raises
    ------
    ValueError
        When ``F`` vanishes identically on some part.
    """
    Fm = np.asarray(F, dtype=np.float64)
    n, k = Fm.shape
    if n != len(part):
        raise ValueError(f"F has {n} rows but the partition covers {len(part)} unknowns")
    order, bounds = _part_slices(part)
    ranks = np.zeros(part.num_parts, dtype=np.int64)
    dropped = []
    rows, cols, vals = [], [], []
    offset = 0
    for i in range(part.num_parts):
        idx = order[bounds[i]:bounds[i + 1]]
        block = Fm[idx]
        if not np.any(block):
            raise ValueError(f"generating basis is identically zero on part {i}")
        Q, kept = qr_orthonormalize(block, rank_tol)
        r = Q.shape[1]
        ranks[i] = r
        dropped.append(np.setdiff1d(np.arange(k), kept))
        rows.append(np.repeat(np.arange(offset, offset + r), idx.size))
        cols.append(np.tile(idx, r))
        vals.append(Q.T.ravel())
        offset += r
    R = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(offset, n))
    R = as_csr(R)
    # vector problems give exact zeros in the other components
    R.eliminate_zeros()
    return R, ranks, dropped


@dataclass
class CoarseSpace:
    """Restriction ``R0``, Galerkin matrix ``A0 = R0 A R0^T`` and its factor."""

    restriction: sp.csr_matrix
    coarse_matrix: sp.csr_matrix
    coarse_factor: CholeskyFactor | None
    block_ranks: np.ndarray
    partition: Partition
    dropped: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.restriction.shape[0]

    @property
    def row_block(self) -> np.ndarray:
        """Part id owning each coarse unknown."""
        return np.repeat(np.arange(self.partition.num_parts), self.block_ranks)

    def block_partition(self) -> Partition:
        return Partition(self.row_block, self.partition.num_parts)

    def solve(self, b) -> np.ndarray:
        return self.coarse_factor.solve(b)


def build_coarse_space(A, F, part: Partition, rank_tol: float = RANK_TOL, factor: bool = True,
                       check_pattern: bool = True) -> CoarseSpace:
    """Assemble the DDG coarse space for ``A``.

    Parameters
    ----------
    A : sparse matrix
        Symmetric positive definite fine operator.
    F : GeneratingBasis or ndarray
    part : Partition
        Non-overlapping partition of the unknowns.
    factor : bool
        Skip the coarse factorization when False (used when a nested
        preconditioner replaces the exact coarse solve).

    Raises
    ------
    NotPositiveDefiniteError
        When ``A0`` cannot be factored; ``block`` names the owning part.
    """
    A = as_csr(A)
    R, ranks, dropped = build_restriction(F, part, rank_tol)
    A0 = triple_product(R, A)
    cs = CoarseSpace(R, A0, None, ranks, part, dropped)
    if check_pattern:
        _check_block_pattern(cs, A)
    if factor:
        try:
            cs.coarse_factor = cholesky_factorize(A0)
        except NotPositiveDefiniteError as err:
            raise NotPositiveDefiniteError(err.pivot, int(cs.row_block[err.pivot]),
                                           "coarse matrix") from err
    return cs


def _check_block_pattern(cs: CoarseSpace, A):
    P = sp.csr_matrix((np.ones(cs.rank), (cs.row_block, np.arange(cs.rank))),
                      shape=(cs.partition.num_parts, cs.rank))
    B = abs(P @ abs(cs.coarse_matrix) @ P.T)
    adj = subdomain_adjacency(cs.partition, A)
    extra = B.astype(bool).astype(np.int8) - adj.astype(bool).astype(np.int8)
    if extra.nnz and extra.max() > 0:
        raise RuntimeError("coarse matrix couples parts that are not adjacent in A")


def coarse_correct(cs: CoarseSpace, r) -> np.ndarray:
    """``R0^T A0^{-1} R0 r``."""
    R = cs.restriction
    r = np.asarray(r, dtype=np.float64)
    if r.shape[0] != R.shape[1]:
        raise ValueError(f"residual has {r.shape[0]} entries, coarse space expects {R.shape[1]}")
    return R.T @ cs.solve(R @ r)


def coarsen_generators(cs: CoarseSpace, F) -> GeneratingBasis:
    """Coarse generating vectors ``F0 = R0 F`` with the labels of ``F``."""
    Fm = np.asarray(F, dtype=np.float64)
    if Fm.shape[0] != cs.restriction.shape[1]:
        raise ValueError(f"F has {Fm.shape[0]} rows, restriction has {cs.restriction.shape[1]} columns")
    F0 = np.asarray(cs.restriction @ Fm)
    if isinstance(F, GeneratingBasis):
        return GeneratingBasis(F0, F.degree, F.num_components, F.num_materials, list(F.column_labels))
    return GeneratingBasis(F0, -1, 1, 1, [])


def coarse_solution_error(A, f, cs: CoarseSpace, reference) -> float:
    """Energy-norm error ``||R0^T u0 - reference||_A`` of the Galerkin solution."""
    A = as_csr(A)
    R = cs.restriction
    e = R.T @ cs.solve(R @ np.asarray(f, dtype=np.float64)) - np.asarray(reference)
    return float(np.sqrt(max(e @ (A @ e), 0.0)))
