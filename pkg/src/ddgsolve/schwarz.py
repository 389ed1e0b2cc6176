"""Symmetric multiplicative overlapping Schwarz with a DDG coarse correction."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .coarse import (
    RANK_TOL,
    CoarseSpace,
    GeneratingBasis,
    build_coarse_space,
    coarsen_generators,
)
from .partition import (
    OverlapSet,
    Partition,
    expand_overlap,
    graph_partition,
    num_parts_for,
    subdomain_adjacency,
)
from .sparse import CholeskyFactor, NotPositiveDefiniteError, _pivot_tol, as_csr, cholesky_factorize

__all__ = [
    "SubdomainSolver",
    "SubdomainSmoother",
    "TwoLevelPreconditioner",
    "TooSmallForThreeLevels",
    "build_two_level",
    "build_three_level",
]


class TooSmallForThreeLevels(ValueError):
    """The second-level partition would have fewer than two parts."""


@dataclass
class SubdomainSolver:
    """Exact local solver for ``A_i = A[idx][:, idx]``."""

    indices: np.ndarray
    factor: CholeskyFactor

    @property
    def size(self) -> int:
        return self.indices.size

    def solve(self, b) -> np.ndarray:
        return self.factor.solve(b)


class SubdomainSmoother:
    """One-level multiplicative Schwarz over a fixed list of overlapping subdomains.

    All local factors are packed into flat arrays so a whole sweep runs in
    compiled code.  ``inner="exact"`` uses envelope Cholesky after reverse
    Cuthill-McKee; ``inner="ssor"`` runs ``ssor_iters`` symmetric SOR sweeps
    on each local problem instead.

    Parameters
    ----------
    A : csr_matrix
        Symmetric fine operator.
    overlap : OverlapSet
    inner : {"exact", "ssor"}
    ssor_iters : int
    omega : float
        SOR relaxation in ``(0, 2)``.
    """

    def __init__(self, A, overlap: OverlapSet, inner="exact", ssor_iters=2, omega=1.0):
        if inner not in ("exact", "ssor"):
            raise ValueError(f"inner solver must be 'exact' or 'ssor', got {inner!r}")
        if inner == "ssor" and not (0 < omega < 2 and ssor_iters >= 1):
            raise ValueError("ssor needs 0 < omega < 2 and ssor_iters >= 1")
        A = as_csr(A)
        self.A = A
        self.inner = inner
        self.ssor_iters = int(ssor_iters)
        self.omega = float(omega)
        self.overlap = overlap
        self._indptr = A.indptr.astype(np.int64)
        self._indices = A.indices.astype(np.int64)
        self._data = A.data
        n = A.shape[0]
        nsub = len(overlap)
        sizes = np.array([s.size for s in overlap.subdomains], dtype=np.int64)
        self.sub_ptr = np.zeros(nsub + 1, dtype=np.int64)
        self.sub_ptr[1:] = np.cumsum(sizes)
        self.max_size = int(sizes.max()) if nsub else 0
        gmap = np.full(n, -1, dtype=np.int64)
        if inner == "exact":
            self._pack_exact(overlap, gmap)
        else:
            self._pack_ssor(overlap, gmap)
        self.order = np.arange(nsub, dtype=np.int64)
        self._work = np.empty(max(self.max_size, 1))
        self._work2 = np.empty(max(self.max_size, 1))

    def __len__(self):
        return self.sub_ptr.size - 1

    def _pack_exact(self, overlap, gmap):
        total = int(self.sub_ptr[-1])
        sub_idx = np.empty(total, dtype=np.int64)
        first = np.empty(total, dtype=np.int64)
        local = []
        widths_total = 0
        for s, idx in enumerate(overlap.subdomains):
            idx = np.asarray(idx, dtype=np.int64)
            lptr, lind, ldat = _kernels.extract_local(self._indptr, self._indices, self._data, idx, gmap)
            perm = _kernels.rcm_order(lptr, lind)
            f = _kernels.envelope_profile(lptr, lind, perm)
            a = self.sub_ptr[s]
            sub_idx[a:a + idx.size] = idx[perm]
            first[a:a + idx.size] = f
            local.append((lptr, lind, ldat, perm))
            widths_total += int((np.arange(idx.size) - f + 1).sum())
        rowptr = np.empty(total, dtype=np.int64)
        L = np.zeros(widths_total)
        pos = 0
        for s, (lptr, lind, ldat, perm) in enumerate(local):
            a, b = self.sub_ptr[s], self.sub_ptr[s + 1]
            m = b - a
            w = np.arange(m) - first[a:b] + 1
            rp = np.empty(m, dtype=np.int64)
            rp[0] = 0
            rp[1:] = np.cumsum(w)[:-1]
            rowptr[a:b] = rp + pos
            width = int(w.sum())
            seg = L[pos:pos + width]
            diag = ldat[np.repeat(np.arange(m), np.diff(lptr)) == lind]
            bad = _kernels.envelope_factor(lptr, lind, ldat, perm, first[a:b], rp, seg, _pivot_tol(diag))
            if bad >= 0:
                raise NotPositiveDefiniteError(sub_idx[a + bad], s, "subdomain matrix")
            pos += width
            local[s] = None
        self.sub_idx = sub_idx
        self.first = first
        self.rowptr = rowptr
        self.L = L

    def _pack_ssor(self, overlap, gmap):
        self.sub_idx = np.concatenate([np.asarray(s, dtype=np.int64) for s in overlap.subdomains])
        ptrs, inds, dats, diags = [], [], [], []
        offset = 0
        for idx in overlap.subdomains:
            idx = np.asarray(idx, dtype=np.int64)
            lptr, lind, ldat = _kernels.extract_local(self._indptr, self._indices, self._data, idx, gmap)
            rows = np.repeat(np.arange(idx.size), np.diff(lptr))
            d = np.zeros(idx.size)
            np.add.at(d, rows[rows == lind], ldat[rows == lind])
            if np.any(d <= 0):
                raise NotPositiveDefiniteError(idx[np.flatnonzero(d <= 0)[0]], len(ptrs), "subdomain matrix")
            ptrs.append(lptr + offset)
            inds.append(lind)
            dats.append(ldat)
            diags.append(d)
            offset += lind.size
        self.loc_ptr = np.concatenate(ptrs)
        self.lind = np.concatenate(inds)
        self.ldat = np.concatenate(dats)
        self.diag = np.concatenate(diags)

    # -- local solves -----------------------------------------------------

    def subdomain_indices(self, s) -> np.ndarray:
        return np.sort(self.sub_idx[self.sub_ptr[s]:self.sub_ptr[s + 1]])

    def local_solve(self, s, b) -> np.ndarray:
        """Apply the (exact or SSOR) inverse of subdomain ``s`` to ``b`` given in sorted-index order."""
        a, e = self.sub_ptr[s], self.sub_ptr[s + 1]
        m = e - a
        b = np.asarray(b, dtype=np.float64)
        if self.inner == "exact":
            gl = self.sub_idx[a:e]
            pos = np.searchsorted(self.subdomain_indices(s), gl)
            x = b[pos].copy()
            _kernels.envelope_solve(self.first[a:e], self.rowptr[a:e], self.L, x)
            out = np.empty(m)
            out[pos] = x
            return out
        x = np.empty(m)
        _kernels._ssor_local(self.loc_ptr[a + s:a + s + m + 1], self.lind, self.ldat, self.diag[a:e],
                             b.copy(), x, self.ssor_iters, self.omega)
        return x

    def subdomain(self, s) -> SubdomainSolver:
        """Standalone exact solver for subdomain ``s`` (a copy of its factor)."""
        if self.inner != "exact":
            raise ValueError("standalone subdomain solvers exist only for exact inner solves")
        a, e = self.sub_ptr[s], self.sub_ptr[s + 1]
        gl = self.sub_idx[a:e]
        idx = np.sort(gl)
        perm = np.searchsorted(idx, gl)
        rp = self.rowptr[a:e]
        first = self.first[a:e].copy()
        lo = rp[0]
        hi = rp[-1] + (e - a - 1) - first[-1] + 1
        fac = CholeskyFactor("envelope", e - a, perm, first=first, rowptr=rp - lo, L=self.L[lo:hi].copy())
        return SubdomainSolver(idx, fac)

    # -- sweeps -----------------------------------------------------------

    def sweep(self, u, res, reverse=False):
        """One pass over the subdomains, updating ``u`` and keeping ``res = f - A u``."""
        order = self.order[::-1].copy() if reverse else self.order
        if self.inner == "exact":
            _kernels.sweep_envelope(self._indptr, self._indices, self._data, u, res, self.sub_ptr,
                                    self.sub_idx, self.first, self.rowptr, self.L, order, self._work)
        else:
            _kernels.sweep_ssor(self._indptr, self._indices, self._data, u, res, self.sub_ptr,
                                self.sub_idx, self.loc_ptr, self.lind, self.ldat, self.diag, order,
                                self.ssor_iters, self.omega, self._work, self._work2)

    def sweep_reference(self, u, f, reverse=False):
        """Literal sweep: full residual ``f - A u`` recomputed before every subdomain."""
        order = self.order[::-1] if reverse else self.order
        for s in order:
            a, e = self.sub_ptr[s], self.sub_ptr[s + 1]
            idx = self.sub_idx[a:e] if self.inner == "ssor" else self.subdomain_indices(s)
            r = f - self.A @ u
            u[idx] += self.local_solve(s, r[idx])

    @property
    def storage(self) -> int:
        """Floating-point entries held by the local solvers."""
        return int(self.L.size if self.inner == "exact" else self.ldat.size)


class TwoLevelPreconditioner:
    """Symmetric two-level (or nested three-level) multiplicative Schwarz operator.

    ``apply(r)`` starts from a zero guess, runs a forward subdomain sweep,
    adds the coarse correction of the current residual, recomputes the true
    residual and finishes with a reverse sweep.  When ``next_level`` is set,
    the coarse solve is replaced by one application of that preconditioner to
    the coarse matrix (a V-cycle).

    Attributes
    ----------
    coarse_seconds : float
        Wall-clock time spent in coarse corrections across all applies.
    apply_seconds : float
        Wall-clock time spent in ``apply``.
    """

    def __init__(self, A, smoother: SubdomainSmoother, coarse: CoarseSpace, next_level=None):
        self.A = as_csr(A)
        self.smoother = smoother
        self.coarse = coarse
        self.next_level = next_level
        self.coarse_seconds = 0.0
        self.apply_seconds = 0.0
        self.num_applies = 0
        self.setup_seconds = 0.0
        self.coarse_setup_seconds = 0.0

    @property
    def levels(self) -> int:
        return 2 if self.next_level is None else 1 + self.next_level.levels

    @property
    def shape(self):
        return self.A.shape

    @property
    def subdomains(self) -> list:
        return [self.smoother.subdomain(s) for s in range(len(self.smoother))]

    def smooth_sweep(self, u, f, order="forward", incremental=True) -> np.ndarray:
        """One multiplicative pass updating ``u`` in place for right-hand side ``f``."""
        if order not in ("forward", "reverse"):
            raise ValueError("order must be 'forward' or 'reverse'")
        f = np.asarray(f, dtype=np.float64)
        if u.shape != f.shape or f.shape[0] != self.A.shape[0]:
            raise ValueError(f"sweep: u {u.shape}, f {f.shape}, A {self.A.shape}")
        if incremental:
            res = f - self.A @ u
            self.smoother.sweep(u, res, reverse=order == "reverse")
        else:
            self.smoother.sweep_reference(u, f, reverse=order == "reverse")
        return u

    def coarse_solve(self, b) -> np.ndarray:
        if self.next_level is not None:
            return self.next_level.apply(b)
        return self.coarse.solve(b)

    def apply(self, r, incremental=True) -> np.ndarray:
        t0 = time.perf_counter()
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.A.shape[0],):
            raise ValueError(f"apply: residual has shape {r.shape}, operator is {self.A.shape}")
        z = np.zeros_like(r)
        if incremental:
            res = r.copy()
            self.smoother.sweep(z, res)
        else:
            self.smoother.sweep_reference(z, r)
            res = r - self.A @ z
        tc = time.perf_counter()
        R = self.coarse.restriction
        z += R.T @ self.coarse_solve(R @ res)
        self.coarse_seconds += time.perf_counter() - tc
        if incremental:
            res = r - self.A @ z
            self.smoother.sweep(z, res, reverse=True)
        else:
            self.smoother.sweep_reference(z, r, reverse=True)
        self.apply_seconds += time.perf_counter() - t0
        self.num_applies += 1
        return z

    __call__ = apply

    def aslinearoperator(self) -> spla.LinearOperator:
        n = self.A.shape[0]
        return spla.LinearOperator((n, n), matvec=self.apply, dtype=np.float64)

    def with_exact_coarse(self) -> "TwoLevelPreconditioner":
        """Same smoother and coarse space with the nested level replaced by an exact solve."""
        cs = self.coarse
        if cs.coarse_factor is None:
            cs = CoarseSpace(cs.restriction, cs.coarse_matrix, cholesky_factorize(cs.coarse_matrix),
                             cs.block_ranks, cs.partition, cs.dropped)
        return TwoLevelPreconditioner(self.A, self.smoother, cs)

    def reset_timers(self):
        self.coarse_seconds = self.apply_seconds = 0.0
        self.num_applies = 0
        if self.next_level is not None:
            self.next_level.reset_timers()


def build_two_level(A, F, part: Partition, delta: int = 0, rank_tol: float = RANK_TOL,
                    num_components: int = 1, inner: str = "exact", ssor_iters: int = 2,
                    omega: float = 1.0, coarse: CoarseSpace | None = None) -> TwoLevelPreconditioner:
    """Two-level preconditioner from generating vectors and a non-overlapping partition.

    Parameters
    ----------
    A : sparse matrix
        SPD fine operator.
    F : GeneratingBasis or ndarray
        Generating vectors, one row per unknown.
    part : Partition
        Partition of the unknowns (component-complete for vector problems).
    delta : int
        Algebraic overlap in graph layers.
    """
    t0 = time.perf_counter()
    A = as_csr(A)
    if coarse is None:
        coarse = build_coarse_space(A, F, part, rank_tol)
    t1 = time.perf_counter()
    overlap = expand_overlap(A, part, delta, num_components)
    smoother = SubdomainSmoother(A, overlap, inner, ssor_iters, omega)
    pre = TwoLevelPreconditioner(A, smoother, coarse)
    pre.coarse_setup_seconds = t1 - t0
    pre.setup_seconds = time.perf_counter() - t0
    return pre


def _second_level_partition(cs: CoarseSpace, A, coarsening_factor, d, seed):
    parts1 = cs.partition.num_parts
    parts2 = num_parts_for(parts1, coarsening_factor, d)
    if parts2 < 2:
        raise TooSmallForThreeLevels(
            f"too small for three levels: {parts1} subdomains at level one give {parts2} "
            f"coarse part(s) at coarsening factor {coarsening_factor}")
    G = subdomain_adjacency(cs.partition, A).astype(np.float64)
    block_part = graph_partition(G, parts2, seed=seed)
    return Partition(block_part.assignment[cs.row_block], parts2)


def build_three_level(A, F, part: Partition, coarsening_factor: float, delta: int = 0, d: int | None = None,
                      rank_tol: float = RANK_TOL, num_components: int = 1, inner: str = "exact",
                      ssor_iters: int = 2, omega: float = 1.0, seed: int = 0) -> TwoLevelPreconditioner:
    """Three-level V-cycle: the level-one coarse solve is one two-level application on ``A0``.

    The second-level partition groups whole level-one subdomains (all their
    coarse unknowns) into ``round(num_parts / coarsening_factor**d)`` parts of
    the subdomain adjacency graph.  Generators are coarsened as ``F0 = R0 F``
    and the same overlap ``delta`` is used on the graph of ``A0``.

    Raises
    ------
    TooSmallForThreeLevels
        When the second-level partition would have fewer than two parts.
    """
    t0 = time.perf_counter()
    A = as_csr(A)
    if d is None:
        raise ValueError("build_three_level needs the spatial dimension d")
    if not isinstance(F, GeneratingBasis):
        F = GeneratingBasis(np.asarray(F, dtype=np.float64), -1)
    cs1 = build_coarse_space(A, F, part, rank_tol, factor=False)
    part2 = _second_level_partition(cs1, A, coarsening_factor, d, seed)
    F0 = coarsen_generators(cs1, F)
    A0 = cs1.coarse_matrix
    level2 = build_two_level(A0, F0, part2, delta, rank_tol, 1, inner, ssor_iters, omega)
    t1 = time.perf_counter()
    overlap = expand_overlap(A, part, delta, num_components)
    smoother = SubdomainSmoother(A, overlap, inner, ssor_iters, omega)
    pre = TwoLevelPreconditioner(A, smoother, cs1, next_level=level2)
    pre.coarse_setup_seconds = t1 - t0
    pre.setup_seconds = time.perf_counter() - t0
    return pre
