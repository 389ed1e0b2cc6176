import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import connected_components, shortest_path

from conftest import grid_laplacian, laplacian_1d, quadrant_partition
from ddgsolve.io import read_partition, write_partition
from ddgsolve.partition import (
    Partition,
    box_partition,
    expand_overlap,
    graph_partition,
    inertial_partition,
    num_parts_for,
    subdomain_adjacency,
)
from ddgsolve.problems import make_problem


def parts_connected(A, part):
    G = sp.csr_matrix(A)
    for idx in part.parts():
        ncomp, _ = connected_components(G[idx][:, idx], directed=False)
        if ncomp != 1:
            return False
    return True


def cut_size(A, assign):
    C = sp.coo_matrix(A)
    return int(np.sum(assign[C.row] != assign[C.col]) // 2)


class TestPartitionType:
    def test_rejects_empty_part(self):
        with pytest.raises(ValueError, match="empty"):
            Partition(np.array([0, 0, 2]), 3)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Partition(np.array([0, 3]), 2)

    def test_file_roundtrip(self, tmp_path):
        p = Partition(np.array([1, 0, 2, 2, 1]), 3)
        write_partition(tmp_path / "part.txt", p)
        q = read_partition(tmp_path / "part.txt")
        assert np.array_equal(p.assignment, q.assignment) and q.num_parts == 3

    def test_num_parts_for(self):
        assert num_parts_for(64000, 10, 3) == 64
        assert num_parts_for(10, 100, 2) == 1


class TestGraphPartition:
    def test_single_part(self):
        A, _ = grid_laplacian(5)
        assert np.all(graph_partition(A, 1).assignment == 0)

    def test_path_split_matches_bruteforce(self):
        A = laplacian_1d(10)
        part = graph_partition(A, 2)
        # brute force over contiguous two-way splits: minimum cut with best balance
        best = min(range(1, 10), key=lambda s: (cut_size(A, (np.arange(10) >= s).astype(int)),
                                                abs(10 - 2 * s)))
        assert best == 5
        assert sorted(part.sizes) == [5, 5]
        assert cut_size(A, part.assignment) == 1
        first = part.assignment[0]
        assert np.all(part.assignment[:5] == first) and np.all(part.assignment[5:] != first)

    def test_grid_four_parts(self):
        A, _ = grid_laplacian(16)
        part = graph_partition(A, 4)
        assert np.array_equal(part.sizes, [64, 64, 64, 64])
        assert parts_connected(A, part)

    def test_too_many_parts(self):
        with pytest.raises(ValueError):
            graph_partition(laplacian_1d(4), 5)

    def test_vector_problem_component_complete(self):
        P = make_problem("elasticity", 20)
        part = graph_partition(P.A, 4, num_components=2)
        a = part.assignment.reshape(-1, 2)
        assert np.all(a[:, 0] == a[:, 1])

    def test_deterministic(self):
        A, _ = grid_laplacian(20)
        a = graph_partition(A, 7, seed=3).assignment
        b = graph_partition(A, 7, seed=3).assignment
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("name,size,cf", [
        ("poisson3d", 16, 4), ("poisson2d", 60, 10), ("biharmonic", 60, 10),
        ("smooth-poisson", 100, 10), ("nonsmooth-poisson", 100, 10), ("elasticity", 60, 10)])
    def test_benchmark_balance_and_connectivity(self, name, size, cf):
        P = make_problem(name, size)
        nc = P.num_components
        k = num_parts_for(P.coords.shape[0], cf, P.d)
        part = graph_partition(P.A, k, num_components=nc)
        sizes = part.sizes // nc
        assert sizes.max() <= 1.3 * P.coords.shape[0] / k
        G = P.A[::nc, ::nc] if nc > 1 else P.A
        assert parts_connected(G, Partition(part.assignment[::nc], k))


class TestInertial:
    def test_collinear(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        assert list(inertial_partition(X, 2).assignment) in ([0, 0, 1, 1], [1, 1, 0, 0])

    def test_lattice_quadrants(self):
        i, j = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
        X = np.column_stack([i.ravel(), j.ravel()]).astype(float)
        part = inertial_partition(X, 4)
        quad = (i.ravel() >= 4).astype(int) * 2 + (j.ravel() >= 4).astype(int)
        # same sets up to relabelling
        for q in range(4):
            ids = np.unique(part.assignment[quad == q])
            assert ids.size == 1
        assert np.unique(part.assignment).size == 4

    def test_randomized_deterministic(self):
        X = np.random.default_rng(0).random((500, 3))
        a = inertial_partition(X, 8, seed=7, randomize_first_cut=True)
        b = inertial_partition(X, 8, seed=7, randomize_first_cut=True)
        assert np.array_equal(a.assignment, b.assignment)
        assert a.sizes.max() - a.sizes.min() <= 3

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError, match="graph_partition"):
            inertial_partition(np.zeros((10, 2)), 3)


class TestOverlap:
    def test_delta_zero(self):
        A, _ = grid_laplacian(8)
        part = quadrant_partition(8)
        ov = expand_overlap(A, part, 0)
        for s, idx in zip(ov.subdomains, part.parts()):
            assert np.array_equal(s, idx)

    def test_path_one_ring(self):
        A = laplacian_1d(9)
        part = Partition(np.array([0] * 4 + [1] * 5), 2)
        ov = expand_overlap(A, part, 1)
        assert list(ov.subdomains[0]) == list(range(0, 5))
        assert list(ov.subdomains[1]) == list(range(3, 9))

    def test_grid_bfs_oracle(self):
        A, _ = grid_laplacian(8)
        part = quadrant_partition(8)
        ov = expand_overlap(A, part, 2)
        G = abs(sp.csr_matrix(A))
        G.setdiag(0)
        G.eliminate_zeros()
        dist = shortest_path(G, unweighted=True, directed=False)
        for s, idx in enumerate(part.parts()):
            oracle = np.flatnonzero(dist[idx].min(axis=0) <= 2)
            assert np.array_equal(ov.subdomains[s], oracle)


class TestAdjacency:
    def test_single_part(self):
        A = laplacian_1d(5)
        B = subdomain_adjacency(Partition(np.zeros(5, dtype=int), 1), A)
        assert B.shape == (1, 1) and B.toarray()[0, 0]

    def test_path_three_parts(self):
        A = laplacian_1d(9)
        B = subdomain_adjacency(Partition(np.repeat([0, 1, 2], 3), 3), A).toarray().astype(bool)
        assert np.array_equal(B, np.eye(3, k=-1, dtype=bool) | np.eye(3, dtype=bool) | np.eye(3, k=1, dtype=bool))

    def test_quadrants_edge_scan(self):
        A, _ = grid_laplacian(8)
        part = quadrant_partition(8)
        B = subdomain_adjacency(part, A).toarray().astype(bool)
        oracle = np.eye(4, dtype=bool)
        C = sp.coo_matrix(A)
        for i, j in zip(C.row, C.col):
            oracle[part.assignment[i], part.assignment[j]] = True
        assert np.array_equal(B, oracle)
        # diagonal quadrants only touch through corners, which the 5-point graph lacks
        assert not B[0, 3] and not B[1, 2]


def test_box_partition_cells():
    X = np.array([[0.1, 0.1], [0.6, 0.1], [0.1, 0.6], [0.6, 0.6], [0.2, 0.2]])
    part = box_partition(X, 0.5, origin=(0.0, 0.0))
    assert part.num_parts == 4
    assert part.assignment[0] == part.assignment[4]


# property tests ------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(m1=st.integers(3, 24), m2=st.integers(3, 24), k=st.integers(1, 12), seed=st.integers(0, 1000))
def test_graph_partition_invariants(m1, m2, k, seed):
    A = sp.csr_matrix(sp.kron(sp.identity(m2), laplacian_1d(m1)) + sp.kron(laplacian_1d(m2), sp.identity(m1)))
    n = m1 * m2
    k = min(k, n // 2)
    part = graph_partition(A, k, seed=seed)
    assert len(part) == n and part.num_parts == k
    assert np.all(part.sizes > 0)
    assert part.sizes.max() <= 1.3 * n / k
    assert parts_connected(A, part)
    assert np.array_equal(part.assignment, graph_partition(A, k, seed=seed).assignment)


@settings(max_examples=20, deadline=None)
@given(m=st.integers(4, 14), k=st.integers(1, 6), delta=st.integers(0, 3), seed=st.integers(0, 1000))
def test_overlap_monotone_and_covering(m, k, delta, seed):
    A, _ = grid_laplacian(m)
    part = graph_partition(A, k, seed=seed)
    small = expand_overlap(A, part, delta)
    big = expand_overlap(A, part, delta + 1)
    covered = np.zeros(m * m, dtype=bool)
    for s, (a, b, own) in enumerate(zip(small.subdomains, big.subdomains, part.parts())):
        assert np.all(np.isin(a, b))
        assert np.all(np.isin(own, a))
        assert np.all(np.diff(a) > 0)
        covered[a] = True
    assert covered.all()
