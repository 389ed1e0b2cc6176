"""File formats: Matrix Market, partition files, generator sidecars and CSV tables."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .coarse import GeneratingBasis
from .partition import Partition
from .sparse import as_csr, is_symmetric

__all__ = [
    "write_matrix",
    "read_matrix",
    "write_dense",
    "read_dense",
    "write_partition",
    "read_partition",
    "write_generators",
    "read_generators",
    "write_coordinates",
    "read_coordinates",
    "write_materials",
    "read_materials",
]


def write_matrix(path, A, symmetric=None):
    """Write a sparse matrix in Matrix Market coordinate format.

    Symmetric matrices are stored as their lower triangle unless
    ``symmetric=False``.
    """
    A = as_csr(A)
    if symmetric is None:
        symmetric = is_symmetric(A)
    scipy.io.mmwrite(str(path), A.tocoo(), symmetry="symmetric" if symmetric else "general")


def read_matrix(path) -> sp.csr_matrix:
    """Read a Matrix Market coordinate file into canonical CSR."""
    M = scipy.io.mmread(str(path))
    if not sp.issparse(M):
        raise ValueError(f"{path}: expected coordinate format, found a dense array")
    return as_csr(M)


def write_dense(path, X):
    """Write a vector or dense matrix in Matrix Market array format."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    scipy.io.mmwrite(str(path), X)


def read_dense(path) -> np.ndarray:
    """Read a Matrix Market array file; single columns come back as 1-D vectors."""
    X = scipy.io.mmread(str(path))
    if sp.issparse(X):
        X = X.toarray()
    X = np.asarray(X, dtype=np.float64)
    return X[:, 0] if X.ndim == 2 and X.shape[1] == 1 else X


def write_partition(path, part: Partition):
    """One part id per line, in matrix row order."""
    np.savetxt(path, part.assignment, fmt="%d")


def read_partition(path, num_parts=None) -> Partition:
    a = np.loadtxt(path, dtype=np.int64, ndmin=1, comments="#")
    return Partition(a, int(a.max()) + 1 if num_parts is None else num_parts)


def _labels_path(path) -> Path:
    return Path(str(path) + ".labels")


def write_generators(path, F: GeneratingBasis):
    """``F`` as a Matrix Market array plus ``<path>.labels``.

    The sidecar has a header line with the degree and counts, then one line
    per column: ``component material e1 e2 ...``.
    """
    write_dense(path, F.columns)
    with open(_labels_path(path), "w") as fh:
        fh.write(f"# degree={F.degree} num_components={F.num_components} "
                 f"num_materials={F.num_materials}\n")
        for comp, mat, exps in F.column_labels:
            fh.write(" ".join(str(v) for v in (comp, mat, *exps)) + "\n")


def read_generators(path) -> GeneratingBasis:
    X = read_dense(path)
    if X.ndim == 1:
        X = X[:, None]
    meta = {"degree": -1, "num_components": 1, "num_materials": 1}
    labels = []
    lp = _labels_path(path)
    if lp.exists():
        for line in lp.read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key in meta:
                        meta[key] = int(val)
                continue
            v = [int(t) for t in line.split()]
            labels.append((v[0], v[1], tuple(v[2:])))
        if labels and len(labels) != X.shape[1]:
            raise ValueError(f"{lp}: {len(labels)} labels for {X.shape[1]} columns")
    return GeneratingBasis(X, meta["degree"], meta["num_components"], meta["num_materials"], labels)


def write_coordinates(path, coords):
    """CSV with columns ``node, x, y[, z]``."""
    X = np.asarray(coords, dtype=np.float64)
    names = ["x", "y", "z"][: X.shape[1]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", *names])
        for i, row in enumerate(X):
            w.writerow([i, *(repr(float(v)) for v in row)])


def read_coordinates(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    order = np.argsort(data[:, 0], kind="stable")
    return data[order, 1:]


def write_materials(path, material_of_node):
    """CSV with columns ``node, material``."""
    m = np.asarray(material_of_node, dtype=np.int64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "material"])
        w.writerows(zip(range(m.size), m.tolist()))


def read_materials(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    out = np.empty(data.shape[0], dtype=np.int64)
    out[data[:, 0]] = data[:, 1]
    return out
