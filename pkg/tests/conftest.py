import numpy as np
import pytest
import scipy.sparse as sp

from ddgsolve.partition import Partition


def laplacian_1d(n, dirichlet=True):
    """tridiag(-1, 2, -1); with ``dirichlet=False`` the end rows get diagonal 1."""
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tolil()
    if not dirichlet:
        A[0, 0] = A[n - 1, n - 1] = 1
    return sp.csr_matrix(A)


def grid_laplacian(m):
    """Unscaled 5-point Laplacian on an m x m grid with Fortran-order nodes and unit-square coords."""
    T = laplacian_1d(m)
    I = sp.identity(m)
    A = sp.csr_matrix(sp.kron(I, T) + sp.kron(T, I))
    i, j = np.unravel_index(np.arange(m * m), (m, m), order="F")
    coords = np.column_stack([(i + 1) / (m + 1), (j + 1) / (m + 1)])
    return A, coords


def quadrant_partition(m):
    i, j = np.unravel_index(np.arange(m * m), (m, m), order="F")
    half = m // 2
    return Partition((i >= half).astype(int) + 2 * (j >= half).astype(int), 4)


def random_spd(n, rng, density=0.2, shift=1.0):
    B = sp.random(n, n, density=density, random_state=rng)
    return sp.csr_matrix(B @ B.T + shift * sp.identity(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance reporting ---------------------------------------------------------

ACCEPTANCE_LINES = []
SESSION = {"start": None, "failed": []}


def record_criterion(number, ok, detail):
    """Log one acceptance line for the terminal summary and return ``ok``."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_sessionstart(session):
    import time
    SESSION["start"] = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    # the acceptance file runs last so its final check sees the whole session
    items.sort(key=lambda item: item.nodeid.startswith("tests/test_acceptance.py")
               or item.nodeid.startswith("test_acceptance.py"))


def pytest_runtest_logreport(report):
    if report.failed:
        SESSION["failed"].append(report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
