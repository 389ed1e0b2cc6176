"""Compiled inner loops.

Everything here works on raw CSR arrays so the callers can keep scipy
objects at the Python level.  Envelope (profile) factors are stored row by
row: row ``i`` holds columns ``first[i] .. i`` at
``L[rowptr[i] - first[i] + j]``.
"""

import numpy as np
from numba import njit


# --------------------------------------------------------------------------
# envelope Cholesky
# --------------------------------------------------------------------------


@njit(cache=True)
def envelope_factor(indptr, indices, data, perm, first, rowptr, L, pivot_tol):
    """In-place envelope Cholesky of ``A[perm][:, perm]``.

    ``indptr/indices/data`` describe the unpermuted local matrix; ``L`` must be
    zeroed.  Returns -1 on success or the (permuted) row of the first
    non-positive pivot.
    """
    n = perm.shape[0]
    iperm = np.empty(n, dtype=np.int64)
    for k in range(n):
        iperm[perm[k]] = k
    for i in range(n):
        ni = iperm[i]
        for jj in range(indptr[i], indptr[i + 1]):
            nj = iperm[indices[jj]]
            if nj <= ni:
                L[rowptr[ni] - first[ni] + nj] += data[jj]
    for i in range(n):
        fi = first[i]
        bi = rowptr[i] - fi
        for j in range(fi, i):
            fj = first[j]
            bj = rowptr[j] - fj
            k0 = fi if fi > fj else fj
            s = L[bi + j]
            for k in range(k0, j):
                s -= L[bi + k] * L[bj + k]
            L[bi + j] = s / L[bj + j]
        s = L[bi + i]
        for k in range(fi, i):
            s -= L[bi + k] * L[bi + k]
        if not s > pivot_tol:
            return i
        L[bi + i] = np.sqrt(s)
    return -1


@njit(cache=True)
def envelope_solve(first, rowptr, L, x):
    """Overwrite ``x`` with ``(L L^T)^{-1} x``."""
    n = x.shape[0]
    for i in range(n):
        bi = rowptr[i] - first[i]
        s = x[i]
        for k in range(first[i], i):
            s -= L[bi + k] * x[k]
        x[i] = s / L[bi + i]
    for i in range(n - 1, -1, -1):
        bi = rowptr[i] - first[i]
        xi = x[i] / L[bi + i]
        x[i] = xi
        for k in range(first[i], i):
            x[k] -= L[bi + k] * xi


@njit(cache=True)
def envelope_profile(indptr, indices, perm):
    """First column of each permuted row (the envelope of the lower triangle)."""
    n = perm.shape[0]
    iperm = np.empty(n, dtype=np.int64)
    for k in range(n):
        iperm[perm[k]] = k
    first = np.arange(n).astype(np.int64)
    for i in range(n):
        ni = iperm[i]
        for jj in range(indptr[i], indptr[i + 1]):
            nj = iperm[indices[jj]]
            if nj < first[ni]:
                first[ni] = nj
    return first


# --------------------------------------------------------------------------
# orderings and local extraction
# --------------------------------------------------------------------------


@njit(cache=True)
def extract_local(indptr, indices, data, idx, gmap):
    """Principal submatrix ``A[idx][:, idx]`` as local CSR arrays.

    ``gmap`` is a scratch array of length n filled with -1; it is restored.
    """
    m = idx.shape[0]
    for k in range(m):
        gmap[idx[k]] = k
    nnz = 0
    for k in range(m):
        i = idx[k]
        for jj in range(indptr[i], indptr[i + 1]):
            if gmap[indices[jj]] >= 0:
                nnz += 1
    lptr = np.zeros(m + 1, dtype=np.int64)
    lind = np.empty(nnz, dtype=np.int64)
    ldat = np.empty(nnz, dtype=np.float64)
    pos = 0
    for k in range(m):
        i = idx[k]
        for jj in range(indptr[i], indptr[i + 1]):
            c = gmap[indices[jj]]
            if c >= 0:
                lind[pos] = c
                ldat[pos] = data[jj]
                pos += 1
        lptr[k + 1] = pos
    for k in range(m):
        gmap[idx[k]] = -1
    return lptr, lind, ldat


@njit(cache=True)
def _bfs_levels(indptr, indices, start, mark, stamp, order, level):
    head = 0
    tail = 1
    order[0] = start
    mark[start] = stamp
    level[start] = 0
    while head < tail:
        v = order[head]
        head += 1
        for jj in range(indptr[v], indptr[v + 1]):
            w = indices[jj]
            if mark[w] != stamp:
                mark[w] = stamp
                level[w] = level[v] + 1
                order[tail] = w
                tail += 1
    return tail


@njit(cache=True)
def rcm_order(indptr, indices):
    """Reverse Cuthill-McKee ordering of a symmetric local pattern."""
    n = indptr.shape[0] - 1
    deg = np.empty(n, dtype=np.int64)
    for i in range(n):
        deg[i] = indptr[i + 1] - indptr[i]
    placed = np.zeros(n, dtype=np.bool_)
    mark = np.full(n, -1, dtype=np.int64)
    scratch = np.empty(n, dtype=np.int64)
    level = np.zeros(n, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    nout = 0
    stamp = 0
    nbuf = np.empty(n, dtype=np.int64)
    while nout < n:
        # lowest-degree unplaced node, then two pseudo-peripheral hops
        start = -1
        for i in range(n):
            if not placed[i] and (start < 0 or deg[i] < deg[start]):
                start = i
        for _ in range(2):
            stamp += 1
            cnt = _bfs_levels(indptr, indices, start, mark, stamp, scratch, level)
            last = level[scratch[cnt - 1]]
            best = scratch[cnt - 1]
            for k in range(cnt):
                v = scratch[k]
                if level[v] == last and deg[v] < deg[best]:
                    best = v
            start = best
        head = nout
        out[nout] = start
        placed[start] = True
        nout += 1
        while head < nout:
            v = out[head]
            head += 1
            nb = 0
            for jj in range(indptr[v], indptr[v + 1]):
                w = indices[jj]
                if not placed[w]:
                    placed[w] = True
                    nbuf[nb] = w
                    nb += 1
            # insertion sort by degree keeps the ordering deterministic
            for a in range(1, nb):
                w = nbuf[a]
                b = a - 1
                while b >= 0 and (deg[nbuf[b]] > deg[w] or (deg[nbuf[b]] == deg[w] and nbuf[b] > w)):
                    nbuf[b + 1] = nbuf[b]
                    b -= 1
                nbuf[b + 1] = w
            for a in range(nb):
                out[nout] = nbuf[a]
                nout += 1
    res = np.empty(n, dtype=np.int64)
    for k in range(n):
        res[k] = out[n - 1 - k]
    return res


# --------------------------------------------------------------------------
# multiplicative Schwarz sweeps
# --------------------------------------------------------------------------


@njit(cache=True)
def _scatter_update(indptr, indices, data, u, res, sub_idx, a, x, m):
    for k in range(m):
        t = sub_idx[a + k]
        dx = x[k]
        u[t] += dx
        for jj in range(indptr[t], indptr[t + 1]):
            res[indices[jj]] -= data[jj] * dx


@njit(cache=True)
def sweep_envelope(indptr, indices, data, u, res, sub_ptr, sub_idx, first, rowptr, L, order, work):
    """One multiplicative pass with exact envelope-Cholesky subdomain solves.

    ``res`` must equal ``f - A u`` on entry and is kept equal to it.
    """
    for s in order:
        a = sub_ptr[s]
        m = sub_ptr[s + 1] - a
        x = work[:m]
        for k in range(m):
            x[k] = res[sub_idx[a + k]]
        envelope_solve(first[a:a + m], rowptr[a:a + m], L, x)
        _scatter_update(indptr, indices, data, u, res, sub_idx, a, x, m)


@njit(cache=True)
def _ssor_local(lptr, lind, ldat, diag, b, x, iters, omega):
    n = b.shape[0]
    for k in range(n):
        x[k] = 0.0
    for _ in range(iters):
        for i in range(n):
            s = b[i]
            for jj in range(lptr[i], lptr[i + 1]):
                s -= ldat[jj] * x[lind[jj]]
            x[i] += omega * s / diag[i]
        for i in range(n - 1, -1, -1):
            s = b[i]
            for jj in range(lptr[i], lptr[i + 1]):
                s -= ldat[jj] * x[lind[jj]]
            x[i] += omega * s / diag[i]


@njit(cache=True)
def sweep_ssor(indptr, indices, data, u, res, sub_ptr, sub_idx, loc_ptr, lind, ldat, diag,
               order, iters, omega, work, work2):
    """One multiplicative pass with fixed-count local SSOR solves.

    ``loc_ptr`` packs one local CSR row pointer (m+1 entries, absolute offsets
    into ``lind``/``ldat``) per subdomain, starting at ``sub_ptr[s] + s``.
    """
    for s in order:
        a = sub_ptr[s]
        m = sub_ptr[s + 1] - a
        b = work[:m]
        x = work2[:m]
        for k in range(m):
            b[k] = res[sub_idx[a + k]]
        _ssor_local(loc_ptr[a + s:a + s + m + 1], lind, ldat, diag[a:a + m], b, x, iters, omega)
        _scatter_update(indptr, indices, data, u, res, sub_idx, a, x, m)


# --------------------------------------------------------------------------
# graph helpers for partitioning
# --------------------------------------------------------------------------


@njit(cache=True)
def bfs_within_parts(indptr, indices, assign, sources):
    """Multi-source BFS distances that never cross between parts.

    Unreached nodes get -1.
    """
    n = assign.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    tail = 0
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    head = 0
    while head < tail:
        v = queue[head]
        head += 1
        pv = assign[v]
        for jj in range(indptr[v], indptr[v + 1]):
            w = indices[jj]
            if dist[w] < 0 and assign[w] == pv:
                dist[w] = dist[v] + 1
                queue[tail] = w
                tail += 1
    return dist


@njit(cache=True)
def components_within_parts(indptr, indices, assign):
    """Label connected components of the graph with cross-part edges removed."""
    n = assign.shape[0]
    label = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    nlab = 0
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = nlab
        queue[0] = s
        head = 0
        tail = 1
        ps = assign[s]
        while head < tail:
            v = queue[head]
            head += 1
            for jj in range(indptr[v], indptr[v + 1]):
                w = indices[jj]
                if label[w] < 0 and assign[w] == ps:
                    label[w] = nlab
                    queue[tail] = w
                    tail += 1
        nlab += 1
    return label, nlab


@njit(cache=True)
def boundary_gains(indptr, indices, assign):
    """Best foreign part and move gain (edges gained minus edges lost) per node.

    Interior nodes get target -1.
    """
    n = assign.shape[0]
    target = np.full(n, -1, dtype=np.int64)
    gain = np.zeros(n, dtype=np.int64)
    for v in range(n):
        pv = assign[v]
        own = 0
        for jj in range(indptr[v], indptr[v + 1]):
            if assign[indices[jj]] == pv:
                own += 1
        best = -1
        bestc = 0
        for jj in range(indptr[v], indptr[v + 1]):
            q = assign[indices[jj]]
            if q == pv:
                continue
            c = 0
            for kk in range(indptr[v], indptr[v + 1]):
                if assign[indices[kk]] == q:
                    c += 1
            if c > bestc or (c == bestc and q < best):
                best = q
                bestc = c
        if best >= 0:
            target[v] = best
            gain[v] = bestc - own
    return target, gain


@njit(cache=True)
def _adjacent(indptr, indices, u, v):
    lo = indptr[u]
    hi = indptr[u + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[u + 1] and indices[lo] == v


@njit(cache=True)
def _touches_moving(indptr, indices, v, moving):
    for jj in range(indptr[v], indptr[v + 1]):
        if moving[indices[jj]]:
            return True
    return False


@njit(cache=True)
def pair_swaps(indptr, indices, cand, gain, grp_start, grp_end, partner):
    """Greedy Kernighan-Lin pairing between opposite move lists of each part pair.

    Candidates inside one group are sorted by decreasing gain.  Swapped nodes
    are never adjacent to another moving node, so the summed gain is exact.
    Returns the swapped node pairs and the total cut reduction.
    """
    n = indptr.shape[0] - 1
    moving = np.zeros(n, dtype=np.bool_)
    out_u = np.empty(cand.shape[0], dtype=np.int64)
    out_v = np.empty(cand.shape[0], dtype=np.int64)
    nsw = 0
    total = 0
    for g in range(grp_start.shape[0]):
        h = partner[g]
        if h < g:
            continue
        i = grp_start[g]
        j = grp_start[h]
        while i < grp_end[g] and j < grp_end[h]:
            u = cand[i]
            v = cand[j]
            if moving[u] or _touches_moving(indptr, indices, u, moving):
                i += 1
                continue
            if moving[v] or _touches_moving(indptr, indices, v, moving):
                j += 1
                continue
            tot = gain[i] + gain[j]
            if _adjacent(indptr, indices, u, v):
                tot -= 2
            if tot <= 0:
                break
            moving[u] = True
            moving[v] = True
            out_u[nsw] = u
            out_v[nsw] = v
            nsw += 1
            total += tot
            i += 1
            j += 1
    return out_u[:nsw], out_v[:nsw], total


@njit(cache=True)
def group_argmax(assign, values, num_groups):
    """Index of the largest value within each group; ties go to the lowest index."""
    best = np.full(num_groups, -1, dtype=np.int64)
    for v in range(assign.shape[0]):
        g = assign[v]
        b = best[g]
        if b < 0 or values[v] > values[b]:
            best[g] = v
    return best


@njit(cache=True)
def capped_growth(indptr, indices, centers, offsets, caps, quantum):
    """Competitive growth of parts from seed nodes with per-part size caps.

    Part ``i`` starts at ``centers[i]`` with head start ``offsets[i]`` (in
    hops) and claims nodes in order of ``offset + hops`` until it holds
    ``caps[i]`` nodes.  Each center belongs to its own part from the start.
    Offsets are rounded to multiples of ``1/quantum`` so a bucket queue
    replaces a heap.  Nodes left unclaimed (walled in by full
    parts) join the smallest adjacent part.  Returns owner and hop distance
    from the owning seed.
    """
    n = indptr.shape[0] - 1
    k = centers.shape[0]
    owner = np.full(n, -1, dtype=np.int64)
    hops = np.zeros(n, dtype=np.int64)
    size = np.zeros(k, dtype=np.int64)
    omin = offsets.min()
    start = np.empty(k, dtype=np.int64)
    for i in range(k):
        start[i] = np.int64(np.rint((offsets[i] - omin) * quantum))
    # a part never gets deeper than its cap, which bounds the bucket range
    head = np.full(start.max() + quantum * (caps.max() + 1) + 1, -1, dtype=np.int64)
    # every node is claimed once and pushes each neighbor at most once
    cap_e = indices.shape[0] + k
    e_node = np.empty(cap_e, dtype=np.int64)
    e_part = np.empty(cap_e, dtype=np.int64)
    e_hops = np.empty(cap_e, dtype=np.int64)
    e_next = np.empty(cap_e, dtype=np.int64)
    ne = 0
    # centers belong to their own part up front, so no part can be emptied
    for i in range(k):
        owner[centers[i]] = i
        size[i] = 1
    for i in range(k):
        v = centers[i]
        nbk = start[i] + quantum
        for jj in range(indptr[v], indptr[v + 1]):
            w = indices[jj]
            if owner[w] < 0:
                e_node[ne] = w
                e_part[ne] = i
                e_hops[ne] = 1
                e_next[ne] = head[nbk]
                head[nbk] = ne
                ne += 1
    for b in range(head.shape[0]):
        while head[b] >= 0:
            e = head[b]
            head[b] = e_next[e]
            v = e_node[e]
            i = e_part[e]
            if owner[v] >= 0 or size[i] >= caps[i]:
                continue
            owner[v] = i
            hops[v] = e_hops[e]
            size[i] += 1
            nbk = b + quantum
            for jj in range(indptr[v], indptr[v + 1]):
                w = indices[jj]
                if owner[w] < 0:
                    e_node[ne] = w
                    e_part[ne] = i
                    e_hops[ne] = e_hops[e] + 1
                    e_next[ne] = head[nbk]
                    head[nbk] = ne
                    ne += 1
    changed = True
    while changed:
        changed = False
        for v in range(n):
            if owner[v] >= 0:
                continue
            best = -1
            for jj in range(indptr[v], indptr[v + 1]):
                o = owner[indices[jj]]
                if o >= 0 and (best < 0 or size[o] < size[best]):
                    best = o
            if best >= 0:
                owner[v] = best
                size[best] += 1
                changed = True
    return owner, hops


@njit(cache=True)
def stays_connected_without(indptr, indices, assign, v):
    """True when removing ``v`` leaves the rest of its part connected (BFS inside the part)."""
    p = assign[v]
    targets = 0
    first = -1
    for jj in range(indptr[v], indptr[v + 1]):
        w = indices[jj]
        if assign[w] == p and w != v:
            targets += 1
            if first < 0:
                first = w
    if targets <= 1:
        return True
    seen = dict()
    seen[v] = True
    seen[first] = True
    queue = [first]
    head = 0
    found = 1
    while head < len(queue):
        x = queue[head]
        head += 1
        for jj in range(indptr[x], indptr[x + 1]):
            w = indices[jj]
            if assign[w] == p and w not in seen:
                seen[w] = True
                queue.append(w)
                for kk in range(indptr[v], indptr[v + 1]):
                    if indices[kk] == w:
                        found += 1
                        break
                if found == targets:
                    return True
    return found == targets


@njit(cache=True)
def transfer_moves(indptr, indices, assign, qptr, qind, amount):
    """Move up to ``amount[e]`` boundary nodes across each quotient edge ``e``.

    ``qptr/qind`` is the part-adjacency graph in CSR form; ``amount`` is
    aligned with ``qind``.  Candidates are taken in order of decreasing cut
    gain and a node is moved only if its part stays connected and it was not
    already relocated in this call.
    """
    n = assign.shape[0]
    cand_e = np.full(n, -1, dtype=np.int64)
    cand_g = np.zeros(n, dtype=np.int64)
    for v in range(n):
        p = assign[v]
        own = 0
        for jj in range(indptr[v], indptr[v + 1]):
            if assign[indices[jj]] == p:
                own += 1
        bestg = -(1 << 40)
        beste = -1
        for jj in range(indptr[v], indptr[v + 1]):
            q = assign[indices[jj]]
            if q == p:
                continue
            lo = qptr[p]
            hi = qptr[p + 1]
            while lo < hi:
                mid = (lo + hi) // 2
                if qind[mid] < q:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < qptr[p + 1] and qind[lo] == q and amount[lo] > 0:
                c = 0
                for kk in range(indptr[v], indptr[v + 1]):
                    if assign[indices[kk]] == q:
                        c += 1
                if c - own > bestg:
                    bestg = c - own
                    beste = lo
        cand_e[v] = beste
        cand_g[v] = bestg
    idx = np.flatnonzero(cand_e >= 0)
    order = np.argsort(-cand_g[idx], kind="mergesort")
    left = amount.copy()
    out = assign.copy()
    touched = np.zeros(n, dtype=np.bool_)
    nmoved = 0
    for t in order:
        v = idx[t]
        e = cand_e[v]
        if left[e] <= 0 or touched[v]:
            continue
        # neighbors that already moved would invalidate the gain and the check
        skip = False
        for jj in range(indptr[v], indptr[v + 1]):
            if touched[indices[jj]]:
                skip = True
                break
        if skip or not stays_connected_without(indptr, indices, out, v):
            continue
        out[v] = qind[e]
        touched[v] = True
        left[e] -= 1
        nmoved += 1
    return out, nmoved
