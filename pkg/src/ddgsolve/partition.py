"""Non-overlapping partitions and their algebraic overlap expansion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .sparse import as_csr

__all__ = [
    "Partition",
    "OverlapSet",
    "adjacency_graph",
    "node_graph",
    "graph_partition",
    "inertial_partition",
    "expand_overlap",
    "subdomain_adjacency",
    "num_parts_for",
    "box_partition",
]


@dataclass(frozen=True)
class Partition:
    """Assignment of every node to exactly one of ``num_parts`` non-empty parts."""

    assignment: np.ndarray
    num_parts: int

    def __post_init__(self):
        a = np.ascontiguousarray(self.assignment, dtype=np.int64)
        object.__setattr__(self, "assignment", a)
        if a.ndim != 1:
            raise ValueError("partition assignment must be 1-D")
        if self.num_parts < 1:
            raise ValueError("a partition needs at least one part")
        if a.size and (a.min() < 0 or a.max() >= self.num_parts):
            raise ValueError(f"part ids must lie in [0, {self.num_parts})")
        counts = np.bincount(a, minlength=self.num_parts)
        if np.any(counts == 0):
            raise ValueError(f"part {int(np.flatnonzero(counts == 0)[0])} is empty")

    def __len__(self):
        return self.assignment.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_parts)

    def parts(self) -> list[np.ndarray]:
        """Sorted node indices of each part."""
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.cumsum(self.sizes)[:-1]
        return np.split(order, bounds)

    def expand_components(self, num_components: int) -> "Partition":
        """Dof partition for node-major interleaved vector unknowns."""
        if num_components == 1:
            return self
        return Partition(np.repeat(self.assignment, num_components), self.num_parts)


@dataclass(frozen=True)
class OverlapSet:
    """Overlapping subdomains grown from a partition by graph distance."""

    subdomains: list
    delta_graph: int

    def __len__(self):
        return len(self.subdomains)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.subdomains])


def num_parts_for(n: int, coarsening_factor: float, d: int) -> int:
    """Part count giving roughly ``coarsening_factor**d`` nodes per part."""
    return max(1, int(round(n / float(coarsening_factor) ** d)))


def adjacency_graph(A) -> sp.csr_matrix:
    """Symmetric off-diagonal nonzero pattern of ``A`` (values ignored)."""
    A = as_csr(A)
    G = (abs(A) + abs(A.T)).tocsr()
    G.setdiag(0)
    G.eliminate_zeros()
    G.data[:] = 1.0
    G.sort_indices()
    return G


def node_graph(A, num_components: int = 1) -> sp.csr_matrix:
    """Adjacency of mesh nodes for node-major interleaved vector unknowns."""
    if num_components == 1:
        return adjacency_graph(A)
    n = A.shape[0]
    if n % num_components:
        raise ValueError(f"{n} unknowns is not a multiple of {num_components} components")
    nodes = n // num_components
    P = sp.csr_matrix((np.ones(n), (np.arange(n) // num_components, np.arange(n))), shape=(nodes, n))
    return adjacency_graph(P @ abs(as_csr(A)) @ P.T)


def _graph_arrays(G):
    return G.indptr.astype(np.int64), G.indices.astype(np.int64)


def _group_argmax(assign, values, num_groups):
    # index of the max value in each group, ties to the lowest node index
    return _kernels.group_argmax(assign, np.asarray(values, dtype=np.float64), num_groups)


def _repair_connectivity(indptr, indices, assign, num_parts):
    """Reattach every non-largest component of a part to its best neighbor part."""
    for _ in range(20):
        label, nlab = _kernels.components_within_parts(indptr, indices, assign)
        if nlab == num_parts:
            return assign
        comp_size = np.bincount(label, minlength=nlab)
        comp_part = np.zeros(nlab, dtype=np.int64)
        comp_part[label] = assign
        # largest component of each part stays
        order = np.lexsort((np.arange(nlab), -comp_size, comp_part))
        keep = np.zeros(nlab, dtype=bool)
        keep[order[np.searchsorted(comp_part[order], np.unique(comp_part))]] = True
        moved = False
        by_label = np.split(np.argsort(label, kind="stable"), np.cumsum(comp_size)[:-1])
        for c in np.flatnonzero(~keep):
            nodes = by_label[c]
            nbr = np.concatenate([indices[indptr[v]:indptr[v + 1]] for v in nodes])
            foreign = assign[nbr][assign[nbr] != comp_part[c]]
            if foreign.size == 0:
                continue  # isolated piece of a disconnected graph
            assign[nodes] = np.bincount(foreign).argmax()
            moved = True
        if not moved:
            return assign
    return assign


def _refine(indptr, indices, assign, num_parts, passes):
    """Size-preserving Kernighan-Lin swap passes between adjacent parts."""
    for _ in range(passes):
        target, gain = _kernels.boundary_gains(indptr, indices, assign)
        cand = np.flatnonzero(target >= 0)
        if cand.size == 0:
            return assign
        src = assign[cand]
        dst = target[cand]
        g = gain[cand]
        order = np.lexsort((cand, -g, dst, src))
        cand, src, dst, g = cand[order], src[order], dst[order], g[order]
        key = src * num_parts + dst
        ukeys, grp_start = np.unique(key, return_index=True)
        grp_end = np.append(grp_start[1:], key.size)
        rev = (ukeys % num_parts) * num_parts + ukeys // num_parts
        pos = np.searchsorted(ukeys, rev)
        pos[pos >= ukeys.size] = 0
        partner = np.where(ukeys[pos] == rev, pos, -1).astype(np.int64)
        su, sv, total = _kernels.pair_swaps(indptr, indices, cand, g.astype(np.int64),
                                           grp_start.astype(np.int64), grp_end.astype(np.int64), partner)
        if su.size == 0 or total <= 0:
            return assign
        trial = assign.copy()
        trial[su], trial[sv] = assign[sv], assign[su]
        _, nlab = _kernels.components_within_parts(indptr, indices, trial)
        if nlab != num_parts:
            return assign
        assign = trial
    return assign


def _landmark_embedding(indptr, indices, assign, num_groups, rng, num_landmarks=4):
    """BFS distances to farthest-point landmarks chosen inside each part.

    The landmarks are a random node's farthest node, then repeatedly the node
    farthest from all landmarks so far, so the distance vectors behave like
    coordinates even where graph distance is an L1-type metric.  Returns the
    embedding, a mask of nodes reached by every BFS and the per-part means.
    """
    n = assign.size
    d = _kernels.bfs_within_parts(indptr, indices, assign, _group_argmax(assign, rng.random(n), num_groups))
    a = _group_argmax(assign, d, num_groups)
    emb = []
    near = None
    for _ in range(num_landmarks):
        d = _kernels.bfs_within_parts(indptr, indices, assign, a)
        emb.append(d)
        near = d if near is None else np.minimum(near, d)
        a = _group_argmax(assign, near, num_groups)
    E = np.stack(emb, axis=1).astype(np.float64)
    ok = np.all(E >= 0, axis=1)
    E[~ok] = 0.0
    cnt = np.maximum(np.bincount(assign, ok, num_groups), 1.0)
    mean = np.stack([np.bincount(assign, E[:, k], num_groups) for k in range(num_landmarks)], axis=1) / cnt[:, None]
    return E, ok, mean


def _landmark_axis(indptr, indices, assign, num_groups, rng, num_landmarks=4):
    """Per-part projection onto the principal axis of the landmark embedding."""
    E, ok, mean = _landmark_embedding(indptr, indices, assign, num_groups, rng, num_landmarks)
    C = E - mean[assign]
    C[~ok] = 0.0
    cov = np.empty((num_groups, num_landmarks, num_landmarks))
    for i in range(num_landmarks):
        for j in range(i, num_landmarks):
            cov[:, i, j] = cov[:, j, i] = np.bincount(assign, C[:, i] * C[:, j], num_groups)
    _, V = np.linalg.eigh(cov)
    axis = V[:, :, -1]
    # fix the eigenvector sign so results do not depend on LAPACK internals
    sign = np.sign(axis[np.arange(num_groups), np.abs(axis).argmax(axis=1)])
    axis *= np.where(sign == 0, 1.0, sign)[:, None]
    return np.einsum("ij,ij->i", C, axis[assign]), ok


def _part_centers(indptr, indices, assign, num_groups, rng):
    """Node of each part closest to the part's mean in the landmark embedding."""
    E, ok, mean = _landmark_embedding(indptr, indices, assign, num_groups, rng)
    dev = ((E - mean[assign]) ** 2).sum(axis=1)
    dev[~ok] = np.inf
    return _group_argmax(assign, -dev, num_groups)


def _bubble(indptr, indices, assign, targets, iters, rng, slack=1.1):
    """Lloyd-style smoothing: regrow every part from its center, capped near its target size.

    Each round recenters the parts and lets them compete for nodes in order
    of hop distance plus a per-part head start; head starts are then nudged
    so oversized parts start later.  Grown parts are connected by
    construction.
    """
    k = targets.size
    caps = np.maximum(np.floor(slack * targets), np.ceil(targets)).astype(np.int64)
    offsets = np.zeros(k)
    for _ in range(iters):
        centers = _part_centers(indptr, indices, assign, k, rng)
        owner, hops = _kernels.capped_growth(indptr, indices, centers, offsets, caps, 8)
        assign = np.where(owner >= 0, owner, assign)
        sizes = np.bincount(assign, minlength=k)
        radius = np.maximum(np.bincount(assign, hops, k) / np.maximum(sizes, 1), 1.0)
        offsets += 0.5 * radius * (sizes / targets - 1.0)
        offsets -= offsets.mean()
    return assign


def _exact_targets(n, num_parts, sizes):
    # n // k everywhere, plus one for the n % k currently largest parts
    t = np.full(num_parts, n // num_parts, dtype=np.int64)
    t[np.argsort(-sizes, kind="stable")[: n % num_parts]] += 1
    return t


def _quotient(indptr, indices, assign, k):
    n = assign.size
    G = sp.csr_matrix((np.ones(indices.size), indices, indptr), shape=(n, n))
    S = sp.csr_matrix((np.ones(n), (np.arange(n), assign)), shape=(n, k))
    Q = (S.T @ G @ S).tocsr()
    Q.setdiag(0)
    Q.eliminate_zeros()
    Q.data[:] = 1.0
    Q.sort_indices()
    return Q


def _balance(indptr, indices, assign, num_parts, rounds=40):
    """Diffusion load balancing down to exact ``n // k`` (+1) part sizes.

    Flows come from the part-graph Laplacian solve ``L phi = excess``; each
    round moves boundary nodes across part pairs accordingly.  When rounded
    flows vanish, single nodes are shifted along descending-``phi`` chains
    from every overfull part to an underfull one.
    """
    n = assign.size
    for _ in range(rounds):
        sizes = np.bincount(assign, minlength=num_parts)
        excess = sizes - _exact_targets(n, num_parts, sizes)
        if not np.any(excess):
            break
        Q = _quotient(indptr, indices, assign, num_parts)
        L = sp.diags(np.asarray(Q.sum(axis=1)).ravel()) - Q + 1e-9 * sp.identity(num_parts)
        phi = spla.spsolve(L.tocsc(), excess.astype(np.float64))
        rows = np.repeat(np.arange(num_parts), np.diff(Q.indptr))
        flow = phi[rows] - phi[Q.indices]
        amount = np.maximum(np.floor(flow + 0.5), 0).astype(np.int64)
        if amount.sum() == 0:
            for p in np.flatnonzero(excess > 0):
                cur = p
                for _ in range(num_parts):
                    lo, hi = Q.indptr[cur], Q.indptr[cur + 1]
                    if lo == hi:
                        break
                    e = lo + int(np.argmin(phi[Q.indices[lo:hi]]))
                    amount[e] += 1
                    cur = Q.indices[e]
                    if excess[cur] < 0 or phi[cur] >= phi[p]:
                        break
        new, moved = _kernels.transfer_moves(indptr, indices, assign, Q.indptr.astype(np.int64),
                                             Q.indices.astype(np.int64), amount)
        if moved == 0:
            break
        assign = new
    return assign


def graph_partition(A, num_parts: int, seed: int = 0, num_components: int = 1,
                    refine_passes: int = 10, smoothing_iters: int = 10) -> Partition:
    """Balanced partition of the nonzero graph of ``A``.

    Recursive graph bisection.  Each part is embedded by BFS distances to a
    few farthest-point landmarks and split at the median of that embedding's
    principal axis.  The parts are then regrown from their centers for a few
    Lloyd-type rounds, which makes them compact, sizes are equalized to
    ``n // num_parts`` (+1) by diffusion, and boundary Kernighan-Lin swap
    passes shorten the cut without changing sizes.

    Parameters
    ----------
    A : sparse matrix
        Symmetric; off-diagonal nonzeros define the graph.
    num_parts : int
    seed : int
        Seeds the random landmark starts.
    num_components : int
        For node-major interleaved vector unknowns the node graph is
        partitioned and every component follows its node.
    refine_passes : int
        Maximum Kernighan-Lin passes.
    smoothing_iters : int
        Regrowth rounds; 0 gives plain recursive bisection.

    Returns
    -------
    Partition
    """
    G = node_graph(A, num_components)
    n = G.shape[0]
    if num_parts < 1:
        raise ValueError("num_parts must be at least 1")
    if num_parts > n:
        raise ValueError(f"cannot split {n} nodes into {num_parts} parts")
    indptr, indices = _graph_arrays(G)
    rng = np.random.default_rng(seed)
    assign = np.zeros(n, dtype=np.int64)
    want = np.array([num_parts], dtype=np.int64)  # final parts still owed by each current part
    while np.any(want > 1):
        cur = want.size
        sizes = np.bincount(assign, minlength=cur)
        split = want > 1
        proj, ok = _landmark_axis(indptr, indices, assign, cur, rng)
        order = np.lexsort((np.arange(n), proj, ~ok, assign))
        rank = np.empty(n, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        rank[order] = np.arange(n) - starts[assign[order]]
        k1 = want // 2
        first_size = np.rint(sizes * k1 / np.maximum(want, 1)).astype(np.int64)
        first_size = np.clip(first_size, 1, np.maximum(sizes - 1, 1))
        second = split[assign] & (rank >= first_size[assign])
        # children of part c are 2c and 2c+1, compressed to keep tree order
        child = 2 * assign + second
        new_want = np.zeros(2 * cur, dtype=np.int64)
        new_want[2 * np.arange(cur)] = np.where(split, k1, want)
        new_want[2 * np.arange(cur) + 1] = np.where(split, want - k1, 0)
        live = new_want > 0
        remap = np.cumsum(live) - 1
        assign = remap[child]
        want = new_want[live]
        assign = _repair_connectivity(indptr, indices, assign, want.size)
    if smoothing_iters > 0 and num_parts > 1:
        assign = _bubble(indptr, indices, assign, np.full(num_parts, n / num_parts), smoothing_iters, rng)
        assign = _repair_connectivity(indptr, indices, assign, num_parts)
        for _ in range(3):
            assign = _balance(indptr, indices, assign, num_parts)
            fixed = _repair_connectivity(indptr, indices, assign.copy(), num_parts)
            if np.array_equal(fixed, assign):
                break
            assign = fixed
    assign = _refine(indptr, indices, assign, num_parts, refine_passes)
    return Partition(assign, num_parts).expand_components(num_components)


def inertial_partition(coords, num_parts: int, seed: int = 0, randomize_first_cut: bool = False) -> Partition:
    """Recursive inertial bisection of a point cloud.

    Each cut is a median split along the principal axis of the points in the
    current piece; the first cut optionally uses a seeded random direction.
    ``num_parts`` must be a power of two.
    """
    X = np.asarray(coords, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if num_parts < 1 or num_parts & (num_parts - 1):
        raise ValueError(f"inertial_partition needs a power-of-two part count, got {num_parts}; "
                         "use graph_partition for arbitrary counts")
    if num_parts > n:
        raise ValueError(f"cannot split {n} points into {num_parts} parts")
    rng = np.random.default_rng(seed)
    assign = np.zeros(n, dtype=np.int64)

    def direction(P, first):
        if first and randomize_first_cut:
            v = rng.standard_normal(d)
            return v / np.linalg.norm(v)
        C = P - P.mean(axis=0)
        w, V = np.linalg.eigh(C.T @ C)
        return V[:, -1]

    pieces = [np.arange(n)]
    level = 0
    while len(pieces) < num_parts:
        nxt = []
        for idx in pieces:
            proj = X[idx] @ direction(X[idx], level == 0)
            order = np.argsort(proj, kind="stable")
            half = idx.size // 2
            nxt.append(np.sort(idx[order[:half]]))
            nxt.append(np.sort(idx[order[half:]]))
        pieces = nxt
        level += 1
    for p, idx in enumerate(pieces):
        assign[idx] = p
    return Partition(assign, num_parts)


def box_partition(coords, width: float, origin=None) -> Partition:
    """Parts are the non-empty cells of a uniform box grid of side ``width``.

    Cells are numbered lexicographically (first coordinate fastest) and then
    compressed so ids are contiguous.
    """
    X = np.asarray(coords, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not width > 0:
        raise ValueError("box width must be positive")
    lo = X.min(axis=0) if origin is None else np.asarray(origin, dtype=np.float64)
    cell = np.floor((X - lo) / width).astype(np.int64)
    cell -= cell.min(axis=0)
    dims = cell.max(axis=0) + 1
    flat = np.ravel_multi_index(tuple(cell.T), tuple(dims), order="F")
    _, assign = np.unique(flat, return_inverse=True)
    return Partition(assign.ravel(), int(assign.max()) + 1)


def expand_overlap(A, part: Partition, delta_graph: int, num_components: int = 1) -> OverlapSet:
    """Grow each part by every node within graph distance ``delta_graph``.

    For vector problems the growth is done on the node graph so every
    subdomain keeps all components of its nodes.
    """
    if delta_graph < 0:
        raise ValueError("delta_graph must be non-negative")
    n = A.shape[0]
    if len(part) != n:
        raise ValueError(f"partition has {len(part)} entries, matrix has {n} rows")
    if delta_graph == 0:
        return OverlapSet(part.parts(), 0)
    nodes = n // num_components
    node_assign = part.assignment[::num_components]
    G = node_graph(A, num_components)
    S = sp.csr_matrix((np.ones(nodes), (np.arange(nodes), node_assign)), shape=(nodes, part.num_parts))
    step = (G + sp.identity(nodes, format="csr")).tocsr()
    for _ in range(delta_graph):
        S = (step @ S).tocsr()
        S.data[:] = 1.0
    S = S.tocsc()
    S.sort_indices()
    subs = []
    for i in range(part.num_parts):
        nd = S.indices[S.indptr[i]:S.indptr[i + 1]].astype(np.int64)
        if num_components > 1:
            nd = (nd[:, None] * num_components + np.arange(num_components)).ravel()
        subs.append(nd)
    return OverlapSet(subs, delta_graph)


def subdomain_adjacency(part: Partition, A) -> sp.csr_matrix:
    """Boolean pattern: ``(I, J)`` set iff some edge of ``A`` joins parts I and J, or I == J."""
    n = len(part)
    P = sp.csr_matrix((np.ones(n), (np.arange(n), part.assignment)), shape=(n, part.num_parts))
    B = (P.T @ adjacency_graph(A) @ P).tocsr() + sp.identity(part.num_parts, format="csr")
    B = B.tocsr()
    B.data[:] = 1.0
    B.sort_indices()
    return B.astype(bool)
