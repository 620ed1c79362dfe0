"""l1-penalised least squares by cyclic coordinate descent, plus its SURE.

The solver is the tau -> 0 reference point for the exponential-weights
aggregate: deterministic (fixed cyclic order, zero start), converging by an
explicit duality gap on the objective (1/2n)||y - X beta||^2 + lam||beta||_1.
"""

from dataclasses import dataclass

import numpy as np

from . import backends
from .model import DataError, as_coefficients


@dataclass(frozen=True)
class LassoFit:
    """Solver output: coefficients plus convergence evidence."""

    coefficients: np.ndarray
    active_set: np.ndarray
    iterations: int
    converged: bool
    duality_gap: float


def _gap_from_scalars(gram, xty, yty_n, lam, beta):
    """Duality gap of the objective at ``beta`` from cached second moments.

    With r = y - X beta, the scaled dual point theta = s r / n,
    s = min(1, lam / ||X^T r / n||_inf), is feasible and gives

        gap = ||r||^2/(2n) (1 + s^2) + lam ||beta||_1 - s r^T y / n.

    For lam = 0 the dual point degenerates, so a stationarity surrogate
    ||X^T r / n||_inf * max(1, ||beta||_1) is used instead.
    """
    g = xty - gram @ beta
    rr_n = max(yty_n - 2.0 * float(beta @ xty) + float(beta @ (gram @ beta)), 0.0)
    l1 = float(np.abs(beta).sum())
    if lam == 0.0:
        return float(np.abs(g).max(initial=0.0)) * max(1.0, l1)
    ginf = float(np.abs(g).max(initial=0.0))
    s = min(1.0, lam / ginf) if ginf > 0 else 1.0
    ry_n = yty_n - float(beta @ xty)
    gap = 0.5 * rr_n * (1.0 + s * s) + lam * l1 - s * ry_n
    return max(float(gap), 0.0)


def duality_gap(problem, beta):
    """Duality gap of the penalised objective at ``beta``."""
    beta = as_coefficients(beta, problem.p)
    yty_n = float(problem.response @ problem.response) / problem.n
    return _gap_from_scalars(problem.gram, problem.xty, yty_n, problem.lam, beta)


def fit_lasso(problem, tol=1e-10, max_iter=10000):
    """Minimise the penalised objective by cyclic coordinate descent.

    Deterministic given inputs: coefficients start at zero and coordinates
    are swept in fixed cyclic order; convergence is declared once the
    duality gap drops to ``tol``.  On hitting ``max_iter`` sweeps the best
    iterate is still returned with ``converged=False``.
    """
    if max_iter < 1:
        raise DataError("max_iter must be >= 1")
    if tol <= 0:
        raise DataError("tol must be > 0")
    gram = np.ascontiguousarray(problem.gram)
    xty = np.ascontiguousarray(problem.xty)
    yty_n = float(problem.response @ problem.response) / problem.n
    beta = np.zeros(problem.p)
    lam = problem.lam

    sweeps = 0
    chunk = 8
    converged = False
    gap = _gap_from_scalars(gram, xty, yty_n, lam, beta)
    if gap <= tol:
        converged = True
    while not converged and sweeps < max_iter:
        todo = min(chunk, max_iter - sweeps)
        last_change = backends.cd_sweeps(gram, xty, lam, beta, todo)
        sweeps += todo
        gap = _gap_from_scalars(gram, xty, yty_n, lam, beta)
        if gap <= tol:
            converged = True
        elif last_change == 0.0:
            # exact fixed point of the sweep map; further sweeps are no-ops
            break
        chunk = min(2 * chunk, 512)
    return LassoFit(
        coefficients=beta,
        active_set=np.flatnonzero(beta != 0.0),
        iterations=sweeps,
        converged=converged,
        duality_gap=gap,
    )


def active_design_rank(problem, active_set, threshold=1e-10):
    """Rank of the active-column submatrix X_A.

    Rank-revealing SVD with singular values below ``threshold`` times the
    largest treated as zero.
    """
    active = np.asarray(active_set, dtype=int)
    if active.size == 0:
        return 0
    sub = problem.design[:, active]
    s = np.linalg.svd(sub, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > threshold * s[0]))


def lasso_sure(problem, fit):
    """Risk estimate (1/n)||y - X beta||^2 - sigma^2 + (2 sigma^2/n) rank(X_A).

    The degrees-of-freedom term counts the rank of the active-column
    submatrix; under Gaussian noise this is an unbiased estimate of the
    prediction loss of the fit.
    """
    beta = as_coefficients(fit.coefficients, problem.p)
    r = problem.response - problem.design @ beta
    df = active_design_rank(problem, fit.active_set)
    return (
        float(r @ r) / problem.n
        - problem.sigma ** 2
        + 2.0 * problem.sigma ** 2 * df / problem.n
    )
