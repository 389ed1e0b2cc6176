"""Benchmark linear systems: finite-difference grids and P1 annulus meshes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse import as_csr

__all__ = [
    "ProblemInstance",
    "TriMesh",
    "gaussian_rhs",
    "poisson3d_7pt",
    "poisson2d_5pt",
    "biharmonic_13pt",
    "annulus_mesh",
    "annulus_dims",
    "p1_gradients",
    "fem_poisson_p1",
    "fem_elasticity_p1",
    "smooth_coefficient",
    "material_indicator",
    "discontinuous_coefficient",
    "make_problem",
    "PROBLEMS",
]


@dataclass
class ProblemInstance:
    """A symmetric positive definite system with its geometric metadata.

    ``coords`` has one row per mesh node; vector problems carry
    ``num_components`` node-major interleaved unknowns per node.
    ``energy_scale`` converts ``u^T A u`` to the continuous energy (``h**d``
    for pointwise-scaled finite differences, 1 for finite elements).
    """

    A: sp.csr_matrix
    coords: np.ndarray
    d: int
    q: int
    num_components: int
    rhs: np.ndarray
    mesh_h: float
    label: str
    material_of_node: np.ndarray | None = None
    energy_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]


def gaussian_rhs(n: int, seed: int = 0) -> np.ndarray:
    """Standard normal right-hand side from a seeded generator."""
    return np.random.default_rng(seed).standard_normal(n)


def _grid_index(shape):
    return np.arange(int(np.prod(shape))).reshape(shape, order="F")


def poisson3d_7pt(m: int, seed: int = 0) -> ProblemInstance:
    """7-point Laplacian on an ``m**3`` grid, Dirichlet on the x=0 face, Neumann elsewhere.

    Nodes sit at ``((i+1)h, (j+1/2)h, (k+1/2)h)`` with ``h = 1/m``.  The
    Dirichlet neighbour of the first x-layer is eliminated (its diagonal
    keeps the full weight 6); a missing neighbour across a Neumann face
    lowers the diagonal by one.
    """
    if m < 2:
        raise ValueError("poisson3d_7pt needs m >= 2")
    h = 1.0 / m
    n = m ** 3
    idx = _grid_index((m, m, m))
    rows, cols = [], []
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, m - 1)
        hi[axis] = slice(1, m)
        rows.append(idx[tuple(lo)].ravel())
        cols.append(idx[tuple(hi)].ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    off = sp.coo_matrix((-np.ones(r.size), (r, c)), shape=(n, n))
    off = (off + off.T).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    diag[idx[0].ravel()] += 1.0
    A = as_csr((off + sp.diags(diag)) / h ** 2)
    i, j, k = np.unravel_index(np.arange(n), (m, m, m), order="F")
    coords = np.column_stack([(i + 1) * h, (j + 0.5) * h, (k + 0.5) * h])
    return ProblemInstance(A, coords, 3, 1, 1, gaussian_rhs(n, seed), h, f"poisson3d-{m}",
                           energy_scale=h ** 3)


def poisson2d_5pt(m: int, seed: int = 0) -> ProblemInstance:
    """5-point Laplacian ``/h**2`` on the unit square, Dirichlet on all sides, ``h = 1/(m+1)``."""
    if m < 1:
        raise ValueError("poisson2d_5pt needs m >= 1")
    h = 1.0 / (m + 1)
    T = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
    I = sp.identity(m)
    A = as_csr((sp.kron(I, T) + sp.kron(T, I)) / h ** 2)
    i, j = np.unravel_index(np.arange(m * m), (m, m), order="F")
    coords = np.column_stack([(i + 1) * h, (j + 1) * h])
    return ProblemInstance(A, coords, 2, 1, 1, gaussian_rhs(m * m, seed), h, f"poisson2d-{m}",
                           energy_scale=h ** 2)


_BIHARMONIC_STENCIL = [
    ((0, 0), 20.0),
    ((1, 0), -8.0), ((-1, 0), -8.0), ((0, 1), -8.0), ((0, -1), -8.0),
    ((1, 1), 2.0), ((1, -1), 2.0), ((-1, 1), 2.0), ((-1, -1), 2.0),
    ((2, 0), 1.0), ((-2, 0), 1.0), ((0, 2), 1.0), ((0, -2), 1.0),
]


def biharmonic_13pt(m: int, seed: int = 0) -> ProblemInstance:
    """13-point biharmonic on an ``m x m`` interior grid of the unit square, clamped edges.

    Boundary values are zero; the ghost layer beyond each edge reflects the
    first interior layer (zero normal derivative), which only adds to the
    diagonal of the nodes next to the boundary.
    """
    if m < 4:
        raise ValueError("biharmonic_13pt needs m >= 4")
    h = 1.0 / (m + 1)
    n = m * m
    i, j = np.unravel_index(np.arange(n), (m, m), order="F")
    rows, cols, vals = [], [], []
    for (di, dj), w in _BIHARMONIC_STENCIL:
        ii, jj = i + di, j + dj
        inside = (ii >= 0) & (ii < m) & (jj >= 0) & (jj < m)
        rows.append(np.flatnonzero(inside))
        cols.append(ii[inside] + m * jj[inside])
        vals.append(np.full(inside.sum(), w))
        # ghost at distance two mirrors onto the node itself
        if abs(di) == 2 or abs(dj) == 2:
            ghost = (ii == -2) | (ii == m + 1) | (jj == -2) | (jj == m + 1)
            rows.append(np.flatnonzero(ghost))
            cols.append(np.flatnonzero(ghost))
            vals.append(np.full(ghost.sum(), w))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    A = as_csr(A.tocsr() / h ** 4)
    coords = np.column_stack([(i + 1) * h, (j + 1) * h])
    return ProblemInstance(A, coords, 2, 2, 1, gaussian_rhs(n, seed), h, f"biharmonic-{m}",
                           energy_scale=h ** 2)


@dataclass
class TriMesh:
    """Triangle mesh: node coordinates, counter-clockwise triangles, boundary flags."""

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def annulus_mesh(nr: int, ntheta: int, r_inner: float = 1.0, r_outer: float = 5.0,
                 alternate: bool = True) -> TriMesh:
    """Structured polar mesh of the annulus ``r_inner <= r <= r_outer``.

    ``nr`` rings with linearly spaced radii, ``ntheta`` uniform angles, each
    quad split into two triangles.  Inner and outer rings are flagged as
    boundary.
    """
    if nr < 2 or ntheta < 3:
        raise ValueError("annulus_mesh needs nr >= 2 and ntheta >= 3")
    r = np.linspace(r_inner, r_outer, nr)
    t = 2 * np.pi * np.arange(ntheta) / ntheta
    R, T = np.meshgrid(r, t, indexing="ij")
    nodes = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    a, b = np.meshgrid(np.arange(nr - 1), np.arange(ntheta), indexing="ij")
    a = a.ravel()
    b = b.ravel()
    b1 = (b + 1) % ntheta
    v00 = a * ntheta + b
    v01 = a * ntheta + b1
    v10 = (a + 1) * ntheta + b
    v11 = (a + 1) * ntheta + b1
    flip = ((a + b) % 2 == 1) if alternate else np.zeros(a.size, dtype=bool)
    t1 = np.where(flip[:, None], np.column_stack([v00, v10, v01]), np.column_stack([v00, v10, v11]))
    t2 = np.where(flip[:, None], np.column_stack([v10, v11, v01]), np.column_stack([v00, v11, v01]))
    tris = np.concatenate([t1, t2])
    boundary = np.zeros(nr * ntheta, dtype=bool)
    boundary[:ntheta] = True
    boundary[-ntheta:] = True
    return TriMesh(nodes, tris.astype(np.int64), boundary)


def annulus_dims(size: int) -> tuple[int, int]:
    """Ring and angle counts giving about ``size**2`` interior nodes of near-unit aspect.

    Element aspect is balanced at the mean radius 3 of the 1..5 annulus.
    """
    ratio = 2 * np.pi * 3.0 / 4.0
    interior_rings = max(1, int(round(size / np.sqrt(ratio))))
    ntheta = max(3, int(round(size * size / interior_rings)))
    return interior_rings + 2, ntheta


def p1_gradients(mesh: TriMesh):
    """Constant barycentric gradients (ntri, 3, 2) and signed areas."""
    p = mesh.nodes[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    inv = np.empty((len(det), 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    # grad phi_a = J^{-T} grad_ref phi_a
    G = np.einsum("ak,tkj->taj", ref, inv)
    return G, 0.5 * det


def _assemble(mesh, Ke, dofs_per_node):
    ntri = mesh.triangles.shape[0]
    dofs = (mesh.triangles[:, :, None] * dofs_per_node + np.arange(dofs_per_node)).reshape(ntri, -1)
    k = dofs.shape[1]
    rows = np.broadcast_to(dofs[:, :, None], (ntri, k, k)).ravel()
    cols = np.broadcast_to(dofs[:, None, :], (ntri, k, k)).ravel()
    n = mesh.nodes.shape[0] * dofs_per_node
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    # duplicate summation order differs between (i, j) and (j, i)
    return (K + K.T) * 0.5


def _eliminate_boundary(K, mesh, dofs_per_node):
    free_nodes = np.flatnonzero(~mesh.boundary)
    free = (free_nodes[:, None] * dofs_per_node + np.arange(dofs_per_node)).ravel()
    return as_csr(K[free][:, free]), free_nodes


def smooth_coefficient(x, y):
    """``exp(1 + sin(pi (x + y)))``."""
    return np.exp(1.0 + np.sin(np.pi * (x + y)))


def material_indicator(x, y):
    """Heaviside of ``0.25 + cos(pi x) cos(2 pi y)`` with H(0) = 1."""
    return (0.25 + np.cos(np.pi * x) * np.cos(2 * np.pi * y) >= 0).astype(np.float64)


def discontinuous_coefficient(x, y):
    """Smooth coefficient plus 100 inside the second material."""
    return smooth_coefficient(x, y) + 100.0 * material_indicator(x, y)


def fem_poisson_p1(mesh: TriMesh, coefficient=None, material=None, seed: int = 0, label="fem-poisson"):
    """P1 stiffness for ``-div(c grad u)`` with Dirichlet boundary nodes eliminated.

    The coefficient is evaluated once per triangle at its centroid.  When
    ``material`` (a callable of x, y) is given, ``material_of_node`` records
    its value at each free node.
    """
    G, area = p1_gradients(mesh)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    if coefficient is None:
        c = np.ones(len(area))
    elif callable(coefficient):
        c = np.asarray(coefficient(cent[:, 0], cent[:, 1]), dtype=np.float64) * np.ones(len(area))
    else:
        c = np.full(len(area), float(coefficient))
    if np.any(~(c > 0)):
        raise ValueError("coefficient must be positive on every element")
    Ke = (c * np.abs(area))[:, None, None] * np.einsum("tak,tbk->tab", G, G)
    K = _assemble(mesh, Ke, 1)
    A, free = _eliminate_boundary(K, mesh, 1)
    coords = mesh.nodes[free]
    mat = None
    if material is not None:
        mat = np.asarray(material(coords[:, 0], coords[:, 1])).astype(np.int64)
    h = float(np.sqrt(np.abs(area).mean() * 2))
    return ProblemInstance(A, coords, 2, 1, 1, gaussian_rhs(A.shape[0], seed), h, label,
                           material_of_node=mat)


def fem_elasticity_p1(mesh: TriMesh, seed: int = 0, eliminate=True, label="elasticity"):
    """P1 vector assembly of ``a(u, v) = int grad u : grad v + div u div v``.

    Unknowns are node-major interleaved ``(node0, x), (node0, y), ...``.
    With ``eliminate=False`` the all-Neumann matrix on every node is returned.
    """
    G, area = p1_gradients(mesh)
    ntri = len(area)
    Ke = np.zeros((ntri, 3, 2, 3, 2))
    lap = np.einsum("tak,tbk->tab", G, G)
    for c in range(2):
        Ke[:, :, c, :, c] += lap
    Ke += np.einsum("tac,tbe->tacbe", G, G)
    Ke *= np.abs(area)[:, None, None, None, None]
    K = _assemble(mesh, Ke.reshape(ntri, 6, 6), 2)
    if eliminate:
        A, free = _eliminate_boundary(K, mesh, 2)
    else:
        A, free = as_csr(K), np.arange(mesh.nodes.shape[0])
    coords = mesh.nodes[free]
    h = float(np.sqrt(np.abs(area).mean() * 2))
    return ProblemInstance(A, coords, 2, 1, 2, gaussian_rhs(A.shape[0], seed), h, label)


def _annulus_problem(kind, size, seed):
    nr, nt = annulus_dims(size)
    mesh = annulus_mesh(nr, nt)
    if kind == "smooth-poisson":
        return fem_poisson_p1(mesh, smooth_coefficient, seed=seed, label=f"smooth-poisson-{size}")
    if kind == "nonsmooth-poisson":
        return fem_poisson_p1(mesh, discontinuous_coefficient, material=material_indicator, seed=seed,
                              label=f"nonsmooth-poisson-{size}")
    return fem_elasticity_p1(mesh, seed=seed, label=f"elasticity-{size}")


PROBLEMS = {
    "poisson3d": lambda size, seed=0: poisson3d_7pt(size, seed),
    "poisson2d": lambda size, seed=0: poisson2d_5pt(size, seed),
    "biharmonic": lambda size, seed=0: biharmonic_13pt(size, seed),
    "smooth-poisson": lambda size, seed=0: _annulus_problem("smooth-poisson", size, seed),
    "nonsmooth-poisson": lambda size, seed=0: _annulus_problem("nonsmooth-poisson", size, seed),
    "elasticity": lambda size, seed=0: _annulus_problem("elasticity", size, seed),
}


def make_problem(name: str, size: int, seed: int = 0) -> ProblemInstance:
    """Generate a benchmark by name; ``size`` is the nominal ``n**(1/d)``."""
    try:
        gen = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return gen(size, seed)
