"""Preconditioned conjugate gradient with residual history and Lanczos estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .sparse import as_csr

__all__ = [
    "SolveReport",
    "PreconditionerNotSPDError",
    "pcg",
    "fractional_iterations",
    "condition_estimate",
    "lanczos_tridiagonal",
]

# residuals below this multiple of ||f|| are treated as converged (roundoff floor)
RESIDUAL_FLOOR = 1e-13


class PreconditionerNotSPDError(ArithmeticError):
    """Raised when ``<M r, r> <= 0`` during PCG."""


@dataclass
class SolveReport:
    """Outcome of one PCG solve.

    ``residual_history[k]`` is the true residual norm ``||f - A u_k||`` with
    ``k = 0`` the initial guess.  ``iteration_bound`` is the classical CG
    estimate ``ln(2/tol) / ln((sqrt(kappa)+1)/(sqrt(kappa)-1))``.
    """

    solution: np.ndarray
    residual_history: np.ndarray
    iterations: int
    fractional_iterations: float
    converged: bool
    lanczos_alphas: np.ndarray
    lanczos_betas: np.ndarray
    condition_estimate: float
    iteration_bound: float
    reference_residual: float
    tol: float
    breakdown: str = ""
    extra: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {
            "iterations": self.iterations,
            "fractional_iterations": self.fractional_iterations,
            "condition_estimate": self.condition_estimate,
            "iteration_bound": self.iteration_bound,
            "converged": self.converged,
        }


def _as_apply(M):
    if M is None:
        return lambda r: r.copy()
    if callable(M) and not hasattr(M, "matvec"):
        return M
    if hasattr(M, "matvec"):
        return M.matvec
    raise TypeError("preconditioner must be None, callable or expose matvec")


def pcg(A, M, f, tol: float = 1e-9, max_iter: int = 1000, reference: str = "first") -> SolveReport:
    """Conjugate gradient from a zero initial guess.

    Parameters
    ----------
    A : sparse matrix or LinearOperator
        SPD operator.
    M : callable, LinearOperator or None
        Preconditioner application ``r -> M r``; None for plain CG.
    f : ndarray
        Right-hand side.
    tol : float
        Required reduction relative to the reference residual.
    max_iter : int
    reference : {"first", "initial"}
        ``"first"`` measures reduction against the true residual after the
        first iteration (the first preconditioned step); ``"initial"``
        against ``||f||``.

    Returns
    -------
    SolveReport

    Raises
    ------
    PreconditionerNotSPDError
        If ``<M r, r> <= 0`` for some residual ``r``.
    """
    if reference not in ("first", "initial"):
        raise ValueError("reference must be 'first' or 'initial'")
    if not 0 < tol:
        raise ValueError("tol must be positive")
    if hasattr(A, "tocsr"):
        A = as_csr(A)
        matvec = A.__matmul__
    elif hasattr(A, "matvec"):
        matvec = A.matvec
    else:
        matvec = A.__matmul__
    prec = _as_apply(M)
    f = np.asarray(f, dtype=np.float64)
    n = f.shape[0]
    u = np.zeros(n)
    r = f.copy()
    hist = [float(np.linalg.norm(r))]
    alphas, betas = [], []
    floor = RESIDUAL_FLOOR * hist[0]
    ref = hist[0] if reference == "initial" else None
    converged = hist[0] == 0.0
    breakdown = ""
    k = 0
    z = p = None
    rz = 0.0
    while not converged and k < max_iter:
        z = prec(r)
        rz_new = float(r @ z)
        if not rz_new > 0:
            if np.linalg.norm(r) <= floor:
                converged = True
                break
            raise PreconditionerNotSPDError(
                f"preconditioner not SPD: <M r, r> = {rz_new:.3e} at iteration {k}")
        if p is None:
            p = z.copy()
        else:
            beta = rz_new / rz
            betas.append(beta)
            p = z + beta * p
        rz = rz_new
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if not pAp > 0:
            breakdown = f"non-positive curvature p^T A p = {pAp:.3e} at iteration {k}"
            break
        alpha = rz / pAp
        alphas.append(alpha)
        u += alpha * p
        r -= alpha * Ap
        k += 1
        true_res = float(np.linalg.norm(f - matvec(u)))
        hist.append(true_res)
        if ref is None:
            ref = true_res
        if true_res <= max(tol * ref, floor):
            converged = True
    hist = np.asarray(hist)
    if ref is None:
        ref = hist[0] if hist[0] > 0 else 1.0
    threshold = max(tol * ref, floor)
    # an exact first step leaves ref = 0; measure against ||f|| instead
    scale = ref if ref > 0 else (hist[0] if hist[0] > 0 else 1.0)
    frac = fractional_iterations(hist, max(threshold / scale, np.finfo(float).tiny), scale)
    kappa, bound, _ = condition_estimate(np.asarray(alphas), np.asarray(betas), tol)
    return SolveReport(u, hist, k, float(frac), bool(converged), np.asarray(alphas), np.asarray(betas),
                       kappa, bound, float(ref), tol, breakdown)


def fractional_iterations(residual_history, tol: float, R_ref: float) -> float:
    """Real-valued iteration where the log-residual polyline meets ``tol * R_ref``.

    Returns the first sample index when one lands exactly on the target and
    ``inf`` when the history never reaches it.
    """
    h = np.asarray(residual_history, dtype=np.float64)
    if h.size == 0:
        raise ValueError("residual history is empty")
    target = tol * R_ref
    if not target > 0:
        raise ValueError("tol * R_ref must be positive")
    hit = np.flatnonzero(h <= target)
    if hit.size == 0:
        return float("inf")
    k = int(hit[0])
    if k == 0 or h[k] == target:
        return float(k)
    lo, hi = np.log10(h[k - 1]), np.log10(target)
    # an exact zero residual is treated as crossing at its own sample
    if h[k] == 0:
        return float(k)
    cur = np.log10(h[k])
    return float(k - 1 + (lo - hi) / (lo - cur))


def lanczos_tridiagonal(alphas, betas):
    """Diagonal and off-diagonal of the Lanczos matrix implied by CG coefficients."""
    a = np.asarray(alphas, dtype=np.float64)
    b = np.asarray(betas, dtype=np.float64)[: max(a.size - 1, 0)]
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    return diag, off


def condition_estimate(alphas, betas, tol: float = 1e-9):
    """Condition number of ``M A`` from CG coefficients and the matching iteration bound.

    Returns
    -------
    kappa : float
        ``lambda_max / lambda_min`` of the Lanczos tridiagonal (1 with fewer
        than two coefficients).
    iteration_bound : float
        ``ln(2/tol) / ln((sqrt(kappa)+1)/(sqrt(kappa)-1))``.
    tol : float
    """
    a = np.asarray(alphas, dtype=np.float64)
    if a.size < 2:
        kappa = 1.0
    else:
        diag, off = lanczos_tridiagonal(a, betas)
        ev = eigvalsh_tridiagonal(diag, off)
        kappa = float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")
        kappa = max(kappa, 1.0)
    return kappa, iteration_bound(kappa, tol), tol


def iteration_bound(kappa: float, tol: float) -> float:
    """Classical CG iteration estimate for condition number ``kappa``."""
    if kappa <= 1.0:
        return 1.0
    if not np.isfinite(kappa):
        return float("inf")
    s = np.sqrt(kappa)
    return float(np.log(2.0 / tol) / np.log((s + 1.0) / (s - 1.0)))
