"""scikit-learn style wrappers around the coarse space, preconditioner and PCG."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import check_coords, check_operator, check_positive_int, check_vectors
from .coarse import RANK_TOL, build_coarse_space, build_generating_basis
from .krylov import pcg
from .partition import Partition, graph_partition, inertial_partition, num_parts_for
from .schwarz import build_three_level, build_two_level

__all__ = ["DDGCoarseSpace", "DDGSchwarzPreconditioner", "DDGConjugateGradient"]


def _partition(A, coords, nc, coarsening_factor, partitioner, seed, partition):
    if partition is not None:
        if not isinstance(partition, Partition):
            a = np.asarray(partition, dtype=np.int64)
            partition = Partition(a, int(a.max()) + 1)
        part = partition
        if len(part) != A.shape[0]:
            raise ValueError(f"partition covers {len(part)} unknowns, operator has {A.shape[0]}")
        return part
    nodes, d = coords.shape
    k = num_parts_for(nodes, coarsening_factor, d)
    if partitioner == "inertial":
        k = 1 << max(int(round(np.log2(max(k, 1)))), 0)
        return inertial_partition(coords, k, seed, randomize_first_cut=True).expand_components(nc)
    if partitioner != "graph":
        raise ValueError(f"partitioner must be 'graph' or 'inertial', got {partitioner!r}")
    return graph_partition(A, k, seed=seed, num_components=nc)


class DDGCoarseSpace(TransformerMixin, BaseEstimator):
    """Piecewise-polynomial coarse space fitted to an operator.

    ``fit(A, coords=...)`` partitions the unknowns and builds ``R0`` and the
    Galerkin matrix.  ``transform`` restricts fine vectors to coarse
    coefficients, ``inverse_transform`` prolongs them back and ``predict``
    returns the Galerkin coarse solution ``R0^T A0^{-1} R0 f``.

    Parameters
    ----------
    p : int
        Polynomial degree.
    coarsening_factor : float
        Target ``H/h``.
    partitioner : {"graph", "inertial"}
    num_components : int
    rank_tol : float
    seed : int
    """

    def __init__(self, p=1, coarsening_factor=10.0, partitioner="graph", num_components=1,
                 rank_tol=RANK_TOL, seed=0):
        self.p = p
        self.coarsening_factor = coarsening_factor
        self.partitioner = partitioner
        self.num_components = num_components
        self.rank_tol = rank_tol
        self.seed = seed

    def fit(self, A, y=None, coords=None, material_of_node=None, partition=None):
        check_positive_int(self.p, "p")
        nc = check_positive_int(self.num_components, "num_components", 1)
        if not self.coarsening_factor >= 1:
            raise ValueError("coarsening_factor must be >= 1")
        A = check_operator(A)
        if coords is None:
            raise ValueError("coords are required to build polynomial generators")
        X = check_coords(coords, A.shape[0], nc)
        self.partition_ = _partition(A, X, nc, self.coarsening_factor, self.partitioner, self.seed, partition)
        self.generators_ = build_generating_basis(X, self.p, nc, material_of_node)
        self.coarse_space_ = build_coarse_space(A, self.generators_, self.partition_, self.rank_tol)
        self.operator_ = A
        self.n_features_in_ = A.shape[0]
        self.rank_ = self.coarse_space_.rank
        return self

    def transform(self, X):
        """Coarse coefficients ``R0 X`` (columns are vectors)."""
        check_is_fitted(self, "coarse_space_")
        M, flat = check_vectors(X, self.n_features_in_)
        out = self.coarse_space_.restriction @ M
        return out[:, 0] if flat else out

    def inverse_transform(self, Y):
        check_is_fitted(self, "coarse_space_")
        M, flat = check_vectors(Y, self.rank_)
        out = self.coarse_space_.restriction.T @ M
        return out[:, 0] if flat else out

    def predict(self, f):
        """Galerkin coarse solution of ``A u = f``."""
        check_is_fitted(self, "coarse_space_")
        M, flat = check_vectors(f, self.n_features_in_)
        R = self.coarse_space_.restriction
        out = R.T @ self.coarse_space_.solve(R @ M)
        return out[:, 0] if flat else out


class DDGSchwarzPreconditioner(TransformerMixin, BaseEstimator):
    """Symmetric two- or three-level Schwarz preconditioner.

    After ``fit(A, coords=...)``, ``transform(r)`` returns ``M r`` for a
    residual or a block of residual columns.
    """

    def __init__(self, p=1, coarsening_factor=10.0, delta=0, levels=2, partitioner="graph",
                 num_components=1, inner="exact", ssor_iters=2, rank_tol=RANK_TOL, seed=0):
        self.p = p
        self.coarsening_factor = coarsening_factor
        self.delta = delta
        self.levels = levels
        self.partitioner = partitioner
        self.num_components = num_components
        self.inner = inner
        self.ssor_iters = ssor_iters
        self.rank_tol = rank_tol
        self.seed = seed

    def fit(self, A, y=None, coords=None, material_of_node=None, partition=None):
        check_positive_int(self.p, "p")
        check_positive_int(self.delta, "delta")
        nc = check_positive_int(self.num_components, "num_components", 1)
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels!r}")
        if not self.coarsening_factor >= 1:
            raise ValueError("coarsening_factor must be >= 1")
        A = check_operator(A)
        if coords is None:
            raise ValueError("coords are required to build polynomial generators")
        X = check_coords(coords, A.shape[0], nc)
        part = _partition(A, X, nc, self.coarsening_factor, self.partitioner, self.seed, partition)
        F = build_generating_basis(X, self.p, nc, material_of_node)
        if self.levels == 3:
            pre = build_three_level(A, F, part, self.coarsening_factor, self.delta, d=X.shape[1],
                                    rank_tol=self.rank_tol, num_components=nc, inner=self.inner,
                                    ssor_iters=self.ssor_iters, seed=self.seed)
        else:
            pre = build_two_level(A, F, part, self.delta, self.rank_tol, nc, self.inner, self.ssor_iters)
        self.partition_ = part
        self.preconditioner_ = pre
        self.n_features_in_ = A.shape[0]
        return self

    def transform(self, R):
        check_is_fitted(self, "preconditioner_")
        M, flat = check_vectors(R, self.n_features_in_)
        out = np.column_stack([self.preconditioner_.apply(M[:, j]) for j in range(M.shape[1])])
        return out[:, 0] if flat else out


class DDGConjugateGradient(BaseEstimator):
    """PCG solver; ``predict(f)`` solves ``A u = f`` for each column of ``f``.

    ``preconditioner`` is an unfitted :class:`DDGSchwarzPreconditioner` (or
    None for plain CG); ``fit`` fits a clone, stored as ``preconditioner_``.
    ``report_`` holds the :class:`~ddgsolve.krylov.SolveReport` of the last
    right-hand side.
    """

    def __init__(self, preconditioner=None, tol=1e-9, max_iter=1000, reference="first"):
        self.preconditioner = preconditioner
        self.tol = tol
        self.max_iter = max_iter
        self.reference = reference

    def fit(self, A, y=None, coords=None, material_of_node=None, partition=None):
        if not 0 < self.tol <= 1:
            raise ValueError(f"tol must lie in (0, 1], got {self.tol}")
        check_positive_int(self.max_iter, "max_iter", 1)
        A = check_operator(A)
        if self.preconditioner is not None:
            self.preconditioner_ = clone(self.preconditioner).fit(
                A, coords=coords, material_of_node=material_of_node, partition=partition)
            self.apply_ = self.preconditioner_.preconditioner_
        else:
            self.preconditioner_ = self.apply_ = None
        self.operator_ = A
        self.n_features_in_ = A.shape[0]
        return self

    def predict(self, f):
        check_is_fitted(self, "operator_")
        M, flat = check_vectors(f, self.n_features_in_)
        cols = []
        for j in range(M.shape[1]):
            self.report_ = pcg(self.operator_, self.apply_, M[:, j], self.tol, self.max_iter, self.reference)
            cols.append(self.report_.solution)
        out = np.column_stack(cols)
        return out[:, 0] if flat else out

    def score(self, f, y=None):
        """Negative relative residual of the solution for ``f``."""
        u = self.predict(f)
        F = np.asarray(f, dtype=np.float64)
        return -float(np.linalg.norm(F - self.operator_ @ u) / np.linalg.norm(F))
