import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import grid_laplacian, laplacian_1d, quadrant_partition, random_spd
from ddgsolve.coarse import build_coarse_space, build_generating_basis
from ddgsolve.partition import OverlapSet, Partition, expand_overlap, graph_partition, num_parts_for
from ddgsolve.problems import make_problem
from ddgsolve.schwarz import (
    SubdomainSmoother,
    TooSmallForThreeLevels,
    TwoLevelPreconditioner,
    build_three_level,
    build_two_level,
)


def custom_preconditioner(A, subdomains, part=None):
    """Preconditioner over an explicit subdomain list with a constant coarse space."""
    n = A.shape[0]
    if part is None:
        part = Partition(np.zeros(n, dtype=int), 1)
    ov = OverlapSet([np.asarray(s, dtype=np.int64) for s in subdomains], -1)
    cs = build_coarse_space(A, np.ones((n, 1)), part)
    return TwoLevelPreconditioner(A, SubdomainSmoother(A, ov), cs)


def dense_sweep(A, subdomains, u, f):
    """The multiplicative update applied literally with dense matrices."""
    u = u.copy()
    for idx in subdomains:
        r = f - A @ u
        u[idx] += np.linalg.solve(A[np.ix_(idx, idx)], r[idx])
    return u


def dense_apply(A, subdomains, R0, r):
    z = dense_sweep(A, subdomains, np.zeros_like(r), r)
    A0 = R0 @ A @ R0.T
    z = z + R0.T @ np.linalg.solve(A0, R0 @ (r - A @ z))
    return dense_sweep(A, subdomains[::-1], z, r)


def grid_preconditioner(m=24, p=1, delta=1, k=4):
    A, X = grid_laplacian(m)
    part = quadrant_partition(m) if k == 4 else graph_partition(A, k)
    F = build_generating_basis(X, p)
    return A, build_two_level(A, F, part, delta)


def sym_gap(pre, rng):
    n = pre.shape[0]
    r1, r2 = rng.standard_normal(n), rng.standard_normal(n)
    z1, z2 = pre.apply(r1), pre.apply(r2)
    return abs(z1 @ r2 - r1 @ z2) / (np.linalg.norm(r1) * np.linalg.norm(r2))


class TestSweep:
    def test_single_subdomain_exact(self, rng):
        A = random_spd(30, rng)
        pre = custom_preconditioner(A, [np.arange(30)])
        f = rng.standard_normal(30)
        u = pre.smooth_sweep(np.zeros(30), f)
        assert np.linalg.norm(A @ u - f) <= 1e-10 * np.linalg.norm(f)

    def test_disjoint_blocks_exact(self, rng):
        A = sp.csr_matrix(sp.block_diag([random_spd(10, rng), random_spd(14, rng)]))
        pre = custom_preconditioner(A, [np.arange(10), np.arange(10, 24)])
        f = rng.standard_normal(24)
        u = pre.smooth_sweep(np.zeros(24), f)
        assert np.linalg.norm(A @ u - f) <= 1e-10 * np.linalg.norm(f)

    @pytest.mark.parametrize("order", ["forward", "reverse"])
    @pytest.mark.parametrize("incremental", [True, False])
    def test_overlapping_halves_dense_oracle(self, rng, order, incremental):
        A = laplacian_1d(16)
        subs = [np.arange(0, 9), np.arange(7, 16)]
        pre = custom_preconditioner(A, subs)
        f = rng.standard_normal(16)
        u0 = rng.standard_normal(16)
        u = pre.smooth_sweep(u0.copy(), f, order=order, incremental=incremental)
        ref = dense_sweep(A.toarray(), subs if order == "forward" else subs[::-1], u0, f)
        assert np.linalg.norm(u - ref) <= 1e-12 * np.linalg.norm(ref)

    def test_dimension_mismatch(self):
        pre = custom_preconditioner(laplacian_1d(6), [np.arange(6)])
        with pytest.raises(ValueError):
            pre.smooth_sweep(np.zeros(5), np.zeros(6))
        with pytest.raises(ValueError):
            pre.smooth_sweep(np.zeros(6), np.zeros(6), order="sideways")


class TestSubdomainSolver:
    def test_probe_residuals(self, rng):
        A, pre = grid_preconditioner(m=16, delta=2)
        for sub in pre.subdomains:
            Ai = A[sub.indices][:, sub.indices]
            b = rng.standard_normal(sub.size)
            x = sub.solve(b)
            assert np.linalg.norm(Ai @ x - b) <= 1e-10 * np.linalg.norm(b)
            assert np.all(np.diff(sub.indices) > 0)


class TestApply:
    def test_zero_residual(self):
        _, pre = grid_preconditioner(m=12)
        assert np.array_equal(pre.apply(np.zeros(144)), np.zeros(144))

    def test_symmetry_probe(self, rng):
        _, pre = grid_preconditioner(m=24, p=1, delta=1)
        for _ in range(5):
            assert sym_gap(pre, rng) <= 1e-9

    def test_dense_composition_oracle(self, rng):
        A, pre = grid_preconditioner(m=12, p=1, delta=1)
        subs = [pre.smoother.subdomain_indices(s) for s in range(len(pre.smoother))]
        R0 = pre.coarse.restriction.toarray()
        Ad = A.toarray()
        # a general residual and one from the coarse range
        for r in (rng.standard_normal(144), A @ (R0.T @ rng.standard_normal(R0.shape[0]))):
            ref = dense_apply(Ad, subs, R0, r)
            assert np.linalg.norm(pre.apply(r) - ref) <= 1e-12 * np.linalg.norm(ref)

    def test_coarse_range_correction(self, rng):
        # after a zero-overlap sweep the coarse step adds exactly R0^T A0^{-1} R0 of the current residual
        A, pre = grid_preconditioner(m=12, p=1, delta=0)
        R0 = pre.coarse.restriction.toarray()
        r = A @ (R0.T @ rng.standard_normal(R0.shape[0]))
        z = pre.smooth_sweep(np.zeros(144), r)
        res = r - A @ z
        step = R0.T @ np.linalg.solve(R0 @ A.toarray() @ R0.T, R0 @ res)
        assert np.linalg.norm(pre.coarse.restriction.T @ pre.coarse_solve(pre.coarse.restriction @ res)
                              - step) <= 1e-12 * np.linalg.norm(step)

    def test_wrong_shape(self):
        _, pre = grid_preconditioner(m=8)
        with pytest.raises(ValueError):
            pre.apply(np.zeros(10))

    def test_linear_operator_and_timers(self, rng):
        _, pre = grid_preconditioner(m=10)
        r = rng.standard_normal(100)
        assert np.array_equal(pre.aslinearoperator() @ r, pre.apply(r))
        assert pre.num_applies == 2 and pre.coarse_seconds <= pre.apply_seconds
        pre.reset_timers()
        assert pre.num_applies == 0

    def test_ssor_inner_mode(self, rng):
        A, X = grid_laplacian(20)
        pre = build_two_level(A, build_generating_basis(X, 1), quadrant_partition(20), 1,
                              inner="ssor", ssor_iters=3)
        # fixed sweep count keeps the operator linear and symmetric
        assert sym_gap(pre, rng) <= 1e-9
        r = rng.standard_normal(400)
        assert r @ pre.apply(r) > 0

    def test_rejects_unknown_inner(self):
        A, _ = grid_laplacian(4)
        with pytest.raises(ValueError):
            SubdomainSmoother(A, expand_overlap(A, quadrant_partition(4), 0), inner="ilu")


@pytest.fixture(scope="module")
def big():
    P = make_problem("poisson2d", 200)
    F = build_generating_basis(P.coords, 1)
    part = graph_partition(P.A, num_parts_for(P.n, 10, 2))
    return P, F, part, build_three_level(P.A, F, part, 10, 1, d=2)


class TestThreeLevel:
    def test_single_part_rejected(self):
        P = make_problem("poisson2d", 10)
        F = build_generating_basis(P.coords, 1)
        with pytest.raises(TooSmallForThreeLevels, match="too small for three levels"):
            build_three_level(P.A, F, Partition(np.zeros(100, dtype=int), 1), 10, 1, d=2)

    def test_rank_bound_and_symmetry(self, big, rng):
        P, F, part, pre = big
        assert pre.levels == 3
        lvl2 = pre.next_level
        parts2 = lvl2.coarse.partition.num_parts
        assert parts2 == num_parts_for(part.num_parts, 10, 2) >= 2
        assert lvl2.coarse.rank <= 3 * parts2
        assert sym_gap(pre, rng) <= 1e-9

    def test_exact_level_two_matches_two_level(self, big, rng):
        P, F, part, pre = big
        exact = pre.with_exact_coarse()
        two = build_two_level(P.A, F, part, 1)
        r = rng.standard_normal(P.n)
        a, b = exact.apply(r), two.apply(r)
        assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(b)

    def test_needs_dimension(self):
        P = make_problem("poisson2d", 20)
        with pytest.raises(ValueError):
            build_three_level(P.A, build_generating_basis(P.coords, 1), graph_partition(P.A, 4), 2, 0)


# property tests ------------------------------------------------------------

INSTANCES = {}


def instance(name, size, p, delta):
    key = (name, size, p, delta)
    if key not in INSTANCES:
        P = make_problem(name, size)
        nc = P.num_components
        part = graph_partition(P.A, num_parts_for(P.coords.shape[0], 4, P.d), num_components=nc)
        F = build_generating_basis(P.coords, p, nc, P.material_of_node)
        INSTANCES[key] = (P, build_two_level(P.A, F, part, delta, num_components=nc))
    return INSTANCES[key]


cases = st.tuples(st.sampled_from([("poisson2d", 16), ("biharmonic", 16), ("smooth-poisson", 12),
                                   ("nonsmooth-poisson", 12), ("elasticity", 10), ("poisson3d", 8)]),
                  st.integers(0, 2), st.integers(0, 2))


@settings(max_examples=20, deadline=None)
@given(case=cases, seed=st.integers(0, 2 ** 31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity_symmetry_definiteness(case, seed, a, b):
    (name, size), p, delta = case
    P, pre = instance(name, size, p, delta)
    rng = np.random.default_rng(seed)
    r1, r2 = rng.standard_normal(P.n), rng.standard_normal(P.n)
    z1, z2 = pre.apply(r1), pre.apply(r2)
    lhs = pre.apply(a * r1 + b * r2)
    rhs = a * z1 + b * z2
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * (abs(a) * np.linalg.norm(z1) + abs(b) * np.linalg.norm(z2)) + 1e-300
    assert abs(z1 @ r2 - r1 @ z2) <= 1e-9 * np.linalg.norm(z1) * np.linalg.norm(r2) + 1e-9 * abs(z1 @ r2)
    assert r1 @ z1 > 0


@settings(max_examples=15, deadline=None)
@given(case=cases, seed=st.integers(0, 2 ** 31 - 1))
def test_contraction_and_determinism(case, seed):
    (name, size), p, delta = case
    P, pre = instance(name, size, p, delta)
    rng = np.random.default_rng(seed)
    u_star = rng.standard_normal(P.n)
    f = P.A @ u_star
    u = rng.standard_normal(P.n)
    e0 = u - u_star
    u1 = u + pre.apply(f - P.A @ u)
    e1 = u1 - u_star
    assert e1 @ (P.A @ e1) < e0 @ (P.A @ e0)
    r = f - P.A @ u
    assert np.array_equal(pre.apply(r), pre.apply(r))
    ref = pre.apply(r, incremental=False)
    assert np.linalg.norm(pre.apply(r) - ref) <= 1e-12 * np.linalg.norm(ref)
