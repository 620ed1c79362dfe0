"""Compatibility factors of vector and matrix designs.

The vector factor is the infimum, over a cone of approximately sparse
directions, of a normalised prediction-energy ratio; it calibrates how much
of the l1 mass on a support the design can see.  Exact computation exploits
scale invariance: the infimum over the open cone equals the minimum of
||Xu||^2/n over the slice where the cone margin is one, and that slice is a
union of per-orthant convex quadratic programs.  For larger problems (and
for the matrix analogue, whose cone is not polyhedral) a randomised search
plus local polish reports the best ratio found instead.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from cvxopt import matrix as _cvx_matrix
from cvxopt import solvers as _cvx_solvers
from scipy.optimize import minimize

from .model import DataError, NumericalError, _frozen_array, rng_for

_EXACT_MAX_P = 12
_QP_OPTIONS = {"show_progress": False, "abstol": 1e-12, "reltol": 1e-12,
               "feastol": 1e-10}


@dataclass(frozen=True)
class KappaResult:
    """Value of a compatibility factor together with its witness direction.

    ``mode`` is 'exact' when the value is a true minimum over the cone and
    'lower-bound-estimate' when it is the best ratio found by search.  In
    the latter case the reported number is an upper bound on the infimum
    (any feasible witness can only overshoot it); the mode name records
    how the report is used downstream -- as a stand-in for the unknown
    factor when plugging into bounds -- not a certified lower bound.
    """

    value: float
    mode: str
    witness: np.ndarray
    attained: bool

    def __post_init__(self):
        if self.mode not in ("exact", "lower-bound-estimate"):
            raise DataError(f"unknown kappa mode {self.mode!r}")
        object.__setattr__(
            self, "witness", _frozen_array(np.asarray(self.witness, dtype=float))
        )
        object.__setattr__(self, "value", float(self.value))


def _check_support(p, J):
    J = sorted(set(int(j) for j in J))
    if not J:
        raise DataError("the support J must be nonempty")
    if J[0] < 0 or J[-1] >= p:
        raise DataError(f"support indices must lie in [0, {p})")
    return J


def vector_ratio(design, J, c, u):
    """The defining ratio c^2 |J| ||Xu||^2 / (n (c||u_J||_1 - ||u_Jc||_1)^2).

    Returns +inf outside the (open) cone where the margin is nonpositive.
    """
    design = np.asarray(design, dtype=float)
    u = np.asarray(u, dtype=float)
    J = _check_support(design.shape[1], J)
    mask = np.zeros(design.shape[1], dtype=bool)
    mask[J] = True
    margin = c * np.abs(u[mask]).sum() - np.abs(u[~mask]).sum()
    if margin <= 0.0:
        return math.inf
    xu = design @ u
    num = c ** 2 * len(J) * float(xu @ xu) / design.shape[0]
    return num / margin ** 2


def _orthant_minimum(gram, ridge, signs, slice_normal):
    """Minimise u' gram u over one closed sign orthant cut by the slice."""
    p = gram.shape[0]
    P = _cvx_matrix(2.0 * (gram + ridge * np.eye(p)))
    q = _cvx_matrix(np.zeros(p))
    G = _cvx_matrix(-np.diag(signs.astype(float)))
    h = _cvx_matrix(np.zeros(p))
    A = _cvx_matrix(slice_normal.reshape(1, p))
    b = _cvx_matrix(np.array([1.0]))
    try:
        sol = _cvx_solvers.qp(P, q, G, h, A, b, options=_QP_OPTIONS)
    except (ValueError, ArithmeticError):
        return None
    if sol["x"] is None:
        return None
    return np.array(sol["x"]).ravel()


def _kappa_vector_exact(design, J, c):
    design = np.asarray(design, dtype=float)
    n, p = design.shape
    if p > _EXACT_MAX_P:
        raise DataError(
            f"exact mode enumerates 2^(p-1) orthants and is limited to "
            f"p <= {_EXACT_MAX_P}; got p = {p}"
        )
    gram = design.T @ design / n
    ridge = 1e-12 * max(1.0, float(np.trace(gram)) / p)
    mask = np.zeros(p, dtype=bool)
    mask[J] = True
    best = math.inf
    witness = None
    # u -> -u leaves the ratio unchanged, so pin the first support sign
    free = [j for j in range(p) if j != J[0]]
    for bits in itertools.product((1.0, -1.0), repeat=p - 1):
        signs = np.empty(p)
        signs[J[0]] = 1.0
        for j, s in zip(free, bits):
            signs[j] = s
        normal = np.where(mask, c * signs, -signs)
        u = _orthant_minimum(gram, ridge, signs, normal)
        if u is None:
            continue
        value = vector_ratio(design, J, c, u)
        if value < best:
            best = value
            witness = u
    if witness is None:
        raise NumericalError("no orthant subproblem could be solved")
    return best, witness


def _sample_cone_directions(rng, p, J, c, count):
    """Cone members built as support mass plus a sub-dominant remainder."""
    mask = np.zeros(p, dtype=bool)
    mask[J] = True
    u = rng.standard_normal((count, p))
    on = np.abs(u[:, mask]).sum(axis=1)
    off = np.abs(u[:, ~mask]).sum(axis=1)
    # rescale the off-support part to a uniform fraction of the cone margin
    rho = rng.uniform(0.0, 1.0, size=count)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(off > 0.0, rho * c * on / np.where(off > 0, off, 1.0), 0.0)
    u[:, ~mask] *= factor[:, None]
    return u


def _kappa_vector_estimate(design, J, c, n_directions, seed):
    design = np.asarray(design, dtype=float)
    n, p = design.shape
    rng = rng_for(seed, "kappa-vector")
    mask = np.zeros(p, dtype=bool)
    mask[J] = True
    best = math.inf
    witness = None
    remaining = int(n_directions)
    while remaining > 0:
        count = min(remaining, 20000)
        remaining -= count
        u = _sample_cone_directions(rng, p, J, c, count)
        xu = u @ design.T
        num = c ** 2 * len(J) * np.einsum("ni,ni->n", xu, xu) / n
        margin = c * np.abs(u[:, mask]).sum(axis=1) - np.abs(u[:, ~mask]).sum(axis=1)
        ok = margin > 0.0
        if not np.any(ok):
            continue
        vals = num[ok] / margin[ok] ** 2
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            witness = u[ok][i]
    if witness is None:
        raise NumericalError("search produced no cone member")

    def objective(u):
        return vector_ratio(design, J, c, u)

    polish = minimize(
        objective,
        witness,
        method="Nelder-Mead",
        options={"maxiter": 400 * p, "xatol": 1e-12, "fatol": 1e-14},
    )
    if np.isfinite(polish.fun) and polish.fun < best:
        best = float(polish.fun)
        witness = polish.x
    return best, witness


def kappa_vector(design, J, c, mode="exact", n_directions=100000, seed=0):
    """Compatibility factor of a design matrix on support ``J`` at level ``c``.

    ``mode`` 'exact' enumerates sign orthants (p <= 12) and returns the
    attained minimum; 'lower-bound-estimate' searches ``n_directions``
    random cone members and polishes the best.  Either way the reported
    value is the defining ratio evaluated at the returned witness.
    """
    design = np.asarray(design, dtype=float)
    if design.ndim != 2:
        raise DataError("design must be a 2-D array")
    J = _check_support(design.shape[1], J)
    if not (c > 0 and math.isfinite(c)):
        raise DataError("c must be positive and finite")
    if mode == "exact":
        value, witness = _kappa_vector_exact(design, J, c)
        return KappaResult(value=value, mode="exact", witness=witness,
                           attained=True)
    if mode == "lower-bound-estimate":
        value, witness = _kappa_vector_estimate(design, J, c, n_directions, seed)
        return KappaResult(value=value, mode="lower-bound-estimate",
                           witness=witness, attained=False)
    raise DataError(f"unknown kappa mode {mode!r}")


# ---------------------------------------------------------------------------
# matrix case

def _nuclear_norm(mat):
    return float(np.linalg.svd(mat, compute_uv=False).sum())


def reduction_projectors(b_bar, J, rank_tol=1e-12):
    """Pair of complementary maps splitting a matrix around B-bar's slice.

    The first map keeps the part of its argument invisible to the leading
    singular directions of ``b_bar`` indexed by ``J``; the second is its
    complement, whose range has rank at most 2|J|.
    """
    b_bar = np.asarray(b_bar, dtype=float)
    v1, sing, v2t = np.linalg.svd(b_bar, full_matrices=False)
    rank = int(np.sum(sing > rank_tol * max(sing[0], 1.0))) if sing.size else 0
    if rank == 0:
        raise DataError("the reference matrix must have positive rank")
    J = _check_support(rank, J)
    left = v1[:, J]
    right = v2t[J, :].T
    m1, m2 = b_bar.shape
    q1 = np.eye(m1) - left @ left.T
    q2 = np.eye(m2) - right @ right.T

    def keep(u):
        return q1 @ u @ q2

    def complement(u):
        return u - keep(u)

    return keep, complement


def matrix_ratio(design_tensor, b_bar, J, c, u):
    """Defining ratio of the matrix compatibility factor at ``u``."""
    tensor = np.asarray(design_tensor, dtype=float)
    u = np.asarray(u, dtype=float)
    keep, complement = reduction_projectors(b_bar, J)
    away = _nuclear_norm(keep(u))
    toward = _nuclear_norm(complement(u))
    margin = c * toward - away
    if margin <= 0.0:
        return math.inf
    vals = np.tensordot(tensor, u, axes=([1, 2], [0, 1]))
    num = c ** 2 * len(_check_support(min(b_bar.shape), J)) * float(
        vals @ vals
    ) / tensor.shape[0]
    return num / margin ** 2


def kappa_matrix(design_tensor, b_bar, J, c, budget=100000, seed=0):
    """Search estimate of the matrix compatibility factor.

    Draws ``budget`` random members of the reduction cone (a dominant part
    aligned with ``b_bar``'s leading singular directions plus a rescaled
    remainder), evaluates the defining ratio, and polishes the best by
    local descent.  Estimate-only: the matrix cone is not polyhedral, so
    no exact enumeration exists; results carry mode 'lower-bound-estimate'
    and are never used to assert analytic inequalities.
    """
    tensor = np.asarray(design_tensor, dtype=float)
    if tensor.ndim != 3:
        raise DataError("design_tensor must have shape (n, m1, m2)")
    b_bar = np.asarray(b_bar, dtype=float)
    if not (c > 0 and math.isfinite(c)):
        raise DataError("c must be positive and finite")
    n, m1, m2 = tensor.shape
    keep, complement = reduction_projectors(b_bar, J)
    size = len(_check_support(min(m1, m2), J))
    flat_design = tensor.reshape(n, m1 * m2)
    rng = rng_for(seed, "kappa-matrix")
    best = math.inf
    witness = None
    found = False
    remaining = int(budget)
    while remaining > 0:
        count = min(remaining, 2000)
        remaining -= count
        dominant = complement(rng.standard_normal((count, m1, m2)))
        toward = np.linalg.svd(dominant, compute_uv=False).sum(axis=-1)
        remainder = keep(rng.standard_normal((count, m1, m2)))
        away = np.linalg.svd(remainder, compute_uv=False).sum(axis=-1)
        rho = rng.uniform(0.0, 1.0, size=count)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(away > 0.0, rho * c * toward /
                              np.where(away > 0.0, away, 1.0), 0.0)
        u = dominant + factor[:, None, None] * remainder
        margin = c * toward - factor * away
        ok = (margin > 0.0) & (toward > 0.0)
        if not np.any(ok):
            continue
        found = True
        vals = flat_design @ u[ok].reshape(-1, m1 * m2).T
        num = c ** 2 * size * np.einsum("ni,ni->i", vals, vals) / n
        ratios = num / margin[ok] ** 2
        i = int(np.argmin(ratios))
        if ratios[i] < best:
            best = float(ratios[i])
            witness = u[ok][i]
    if not found or witness is None:
        raise NumericalError(
            "budget exhausted without finding a cone member; the reduction "
            "projector is degenerate"
        )
    shape = witness.shape

    def objective(flat):
        return matrix_ratio(tensor, b_bar, J, c, flat.reshape(shape))

    polish = minimize(
        objective,
        witness.ravel(),
        method="Nelder-Mead",
        options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-12},
    )
    if np.isfinite(polish.fun) and polish.fun < best:
        best = float(polish.fun)
        witness = polish.x.reshape(shape)
    return KappaResult(value=best, mode="lower-bound-estimate",
                       witness=witness, attained=False)
