import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ddgsolve import DDGCoarseSpace, DDGConjugateGradient, DDGSchwarzPreconditioner
from ddgsolve.problems import make_problem


@pytest.fixture(scope="module")
def poisson():
    return make_problem("poisson2d", 30)


def test_coarse_space_roundtrip(poisson):
    est = DDGCoarseSpace(p=1, coarsening_factor=6).fit(poisson.A, coords=poisson.coords)
    y = np.arange(est.rank_, dtype=float)
    assert np.allclose(est.transform(est.inverse_transform(y)), y, atol=1e-12)
    Y = est.transform(np.column_stack([poisson.rhs, 2 * poisson.rhs]))
    assert Y.shape == (est.rank_, 2) and np.allclose(Y[:, 1], 2 * Y[:, 0])


def test_coarse_prediction_is_galerkin(poisson, rng):
    est = DDGCoarseSpace(p=1, coarsening_factor=6).fit(poisson.A, coords=poisson.coords)
    f = poisson.rhs
    u0 = est.predict(f)
    # A-orthogonality of the error to the coarse space
    R = est.coarse_space_.restriction
    assert np.linalg.norm(R @ (f - poisson.A @ u0)) <= 1e-9 * np.linalg.norm(R @ f)


def test_preconditioner_transform(poisson, rng):
    est = DDGSchwarzPreconditioner(p=1, coarsening_factor=6, delta=1).fit(poisson.A, coords=poisson.coords)
    r1, r2 = rng.standard_normal((2, poisson.n))
    z1, z2 = est.transform(r1), est.transform(r2)
    assert abs(z1 @ r2 - r1 @ z2) <= 1e-9 * np.linalg.norm(r1) * np.linalg.norm(r2)
    Z = est.transform(np.column_stack([r1, r2]))
    assert np.allclose(Z, np.column_stack([z1, z2]))


def test_solver_with_clone(poisson):
    pre = DDGSchwarzPreconditioner(p=1, coarsening_factor=6, delta=1)
    solver = DDGConjugateGradient(preconditioner=pre, tol=1e-9).fit(poisson.A, coords=poisson.coords)
    assert not hasattr(pre, "preconditioner_")
    u = solver.predict(poisson.rhs)
    assert solver.report_.converged
    assert solver.score(poisson.rhs) <= 0 and -solver.score(poisson.rhs) < 1e-6
    assert np.linalg.norm(poisson.A @ u - poisson.rhs) < 1e-6 * np.linalg.norm(poisson.rhs)
    copy = clone(solver)
    assert copy.get_params()["preconditioner__p"] == 1


def test_plain_cg(poisson):
    solver = DDGConjugateGradient(tol=1e-8).fit(poisson.A)
    solver.predict(poisson.rhs)
    assert solver.report_.converged and solver.preconditioner_ is None


def test_three_level_and_vector_problem():
    P = make_problem("elasticity", 16)
    est = DDGSchwarzPreconditioner(p=1, coarsening_factor=4, num_components=2).fit(P.A, coords=P.coords)
    assert est.preconditioner_.levels == 2
    Q = make_problem("poisson2d", 64)
    est3 = DDGSchwarzPreconditioner(p=1, coarsening_factor=4, levels=3).fit(Q.A, coords=Q.coords)
    assert est3.preconditioner_.levels == 3


def test_explicit_partition(poisson):
    labels = (poisson.coords[:, 0] > 0.5).astype(int)
    est = DDGCoarseSpace(p=0).fit(poisson.A, coords=poisson.coords, partition=labels)
    assert est.rank_ == 2


@pytest.mark.parametrize("est", [DDGCoarseSpace(), DDGSchwarzPreconditioner(), DDGConjugateGradient()])
def test_not_fitted(est):
    method = est.predict if hasattr(est, "predict") else est.transform
    with pytest.raises(NotFittedError):
        method(np.ones(4))


@pytest.mark.parametrize("kwargs", [dict(p=-1), dict(levels=5), dict(coarsening_factor=0.1),
                                    dict(partitioner="metis")])
def test_invalid_params(poisson, kwargs):
    with pytest.raises(ValueError):
        DDGSchwarzPreconditioner(**kwargs).fit(poisson.A, coords=poisson.coords)


def test_input_validation(poisson):
    with pytest.raises(ValueError):
        DDGCoarseSpace().fit(poisson.A)
    with pytest.raises(ValueError):
        DDGCoarseSpace().fit(poisson.A, coords=poisson.coords[:-1])
    est = DDGCoarseSpace(coarsening_factor=6).fit(poisson.A, coords=poisson.coords)
    with pytest.raises(ValueError):
        est.transform(np.ones(poisson.n + 1))
