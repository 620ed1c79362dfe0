"""Core problem container, losses, penalty calibration and data interchange.

Everything downstream (solvers, samplers, quadrature, experiments) works in
terms of the penalised regression problem

    V(beta) = (1/2n) ||y - X beta||_2^2 + lam * ||beta||_1,

its prediction loss (1/n)||X(a - b)||^2, and the Gibbs-style density
proportional to exp(-V(beta)/tau) at temperature tau > 0.
"""

import json
import math
import os
import zlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class DataError(ValueError):
    """Raised for malformed, inconsistent or non-finite input data."""


class NumericalError(RuntimeError):
    """Raised when an iterative routine diverges or cannot reach its target."""


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype, order="C")
    arr.setflags(write=False)
    return arr


def as_coefficients(values, p):
    """Validate and return a length-``p`` float64 coefficient vector."""
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (p,):
        raise DataError(f"coefficient vector has length {arr.size}, expected {p}")
    if not np.all(np.isfinite(arr)):
        raise DataError("coefficient vector contains non-finite entries")
    return arr


@dataclass(frozen=True)
class RegressionProblem:
    """Immutable bundle (X, y, sigma, lam, tau) with cached second moments.

    Parameters
    ----------
    design : (n, p) array
        Covariate matrix X.
    response : (n,) array
        Observations y.
    sigma : float
        Noise standard deviation (>= 0; 0 means noiseless).
    lam : float
        l1 penalty level (>= 0).
    tau : float
        Temperature of the exponential weights (> 0).
    """

    design: np.ndarray
    response: np.ndarray
    sigma: float
    lam: float
    tau: float

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"design must be a 2-d matrix, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DataError(
                f"response length {y.shape[0]} does not match {X.shape[0]} design rows"
            )
        if not np.all(np.isfinite(X)):
            raise DataError("design contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise DataError("response contains non-finite entries")
        for name in ("sigma", "lam", "tau"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise DataError(f"{name} must be a finite real, got {v!r}")
        if self.sigma < 0:
            raise DataError("sigma must be >= 0")
        if self.lam < 0:
            raise DataError("lam must be >= 0")
        if self.tau <= 0:
            raise DataError("tau must be > 0")
        object.__setattr__(self, "design", _frozen_array(X))
        object.__setattr__(self, "response", _frozen_array(y))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    @cached_property
    def gram(self):
        """Normalised Gram matrix X^T X / n."""
        g = self.design.T @ self.design / self.n
        return _frozen_array(g)

    @cached_property
    def xty(self):
        """Cross moment X^T y / n."""
        return _frozen_array(self.design.T @ self.response / self.n)

    @cached_property
    def columns_scaled(self):
        """True when max_j ||x^j||^2 / n <= 1 (up to float fuzz)."""
        sq = np.einsum("ij,ij->j", self.design, self.design)
        return bool(sq.max(initial=0.0) <= self.n * (1.0 + 1e-12))

    def is_orthonormal(self, tol=1e-10):
        """True when X^T X / n is the identity to within ``tol`` (max norm)."""
        g = self.gram
        return bool(np.abs(g - np.eye(self.p)).max() <= tol)

    def with_params(self, sigma=None, lam=None, tau=None):
        """Copy of the problem with some of (sigma, lam, tau) replaced."""
        return RegressionProblem(
            design=self.design,
            response=self.response,
            sigma=self.sigma if sigma is None else sigma,
            lam=self.lam if lam is None else lam,
            tau=self.tau if tau is None else tau,
        )

    def rescaled(self):
        """Copy with each nonzero column scaled to ||x^j||^2 = n exactly.

        The scaling condition is never applied implicitly; callers opt in.
        """
        return RegressionProblem(
            design=rescale_columns(self.design),
            response=self.response,
            sigma=self.sigma,
            lam=self.lam,
            tau=self.tau,
        )


def rescale_columns(design):
    """Scale each nonzero column of ``design`` to squared norm n exactly."""
    X = np.asarray(design, dtype=float)
    n = X.shape[0]
    norms = np.sqrt(np.einsum("ij,ij->j", X, X))
    scale = np.where(norms > 0, norms / math.sqrt(n), 1.0)
    return X / scale


def prediction_loss(problem, a, b):
    """Prediction loss (1/n) ||X(a - b)||_2^2."""
    a = as_coefficients(a, problem.p)
    b = as_coefficients(b, problem.p)
    d = problem.design @ (a - b)
    return float(d @ d) / problem.n


def potential(problem, beta):
    """Penalised objective V(beta) = (1/2n)||y - X beta||^2 + lam ||beta||_1."""
    beta = as_coefficients(beta, problem.p)
    r = problem.response - problem.design @ beta
    return float(r @ r) / (2.0 * problem.n) + problem.lam * float(np.abs(beta).sum())


def calibrate_lambda(sigma, n, p, delta):
    """Smallest penalty satisfying lam >= 2 sigma sqrt((2/n) log(p/delta))."""
    if not 0.0 < delta < 1.0:
        raise DataError(f"delta must lie in (0, 1), got {delta}")
    if sigma < 0:
        raise DataError("sigma must be >= 0")
    if n < 1 or p < 1:
        raise DataError("n and p must be >= 1")
    return 2.0 * sigma * math.sqrt((2.0 / n) * math.log(p / delta))


def ls_coefficients(problem, cutoff=1e-10):
    """Least-squares pilot via SVD pseudoinverse.

    Singular values below ``cutoff`` times the largest are treated as zero,
    so rank-deficient designs get the minimum-norm solution.
    """
    u, s, vt = np.linalg.svd(problem.design, full_matrices=False)
    keep = s > cutoff * s[0] if s.size and s[0] > 0 else np.zeros_like(s, bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return vt.T @ (inv * (u.T @ problem.response))


# ---------------------------------------------------------------------------
# inequality reports

NUMERIC_ATOL = 1e-10
NUMERIC_RTOL = 1e-10


@dataclass(frozen=True)
class BoundReport:
    """One checked inequality lhs <= rhs with its slack and verdict."""

    lhs: float
    rhs: float
    slack: float
    passed: bool
    context: dict = field(default_factory=dict)


def make_report(lhs, rhs, tolerance=None, **context):
    """Build a BoundReport for lhs <= rhs.

    ``tolerance`` defaults to the analytic-noise allowance
    NUMERIC_ATOL + NUMERIC_RTOL * |rhs|; Monte Carlo callers pass a larger
    explicit value (typically 3 standard errors).
    """
    lhs = float(lhs)
    rhs = float(rhs)
    if tolerance is None:
        tolerance = NUMERIC_ATOL + NUMERIC_RTOL * abs(rhs)
    slack = rhs - lhs
    return BoundReport(
        lhs=lhs,
        rhs=rhs,
        slack=slack,
        passed=bool(slack >= -tolerance),
        context=dict(context, tolerance=float(tolerance)),
    )


# ---------------------------------------------------------------------------
# aggregate estimates

@dataclass(frozen=True)
class EwaEstimate:
    """Posterior-mean estimate with covariance and peakedness functional.

    ``method`` records which route produced it: 'closed-form', 'quadrature'
    or 'sampler'.  ``mc_std_error`` is zero for the deterministic routes.
    """

    mean: np.ndarray
    covariance: np.ndarray
    h_value: float
    method: str
    mc_std_error: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        p = mean.size
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (p, p):
            raise DataError(f"covariance shape {cov.shape} does not match p={p}")
        asym = np.abs(cov - cov.T).max(initial=0.0)
        if asym > 1e-12 * max(1.0, np.abs(cov).max(initial=0.0)):
            raise DataError(f"covariance asymmetric beyond tolerance ({asym:g})")
        cov = 0.5 * (cov + cov.T)
        if cov.shape[0] and np.diag(cov).min() < -1e-12:
            raise DataError("covariance has a negative diagonal entry")
        if self.method not in ("closed-form", "quadrature", "sampler"):
            raise DataError(f"unknown method {self.method!r}")
        se = np.asarray(self.mc_std_error, dtype=float).reshape(-1)
        if se.size == 1 and p != 1:
            se = np.full(p, float(se[0]))
        if se.shape != (p,):
            raise DataError("mc_std_error length does not match mean")
        object.__setattr__(self, "mean", _frozen_array(mean))
        object.__setattr__(self, "covariance", _frozen_array(cov))
        object.__setattr__(self, "h_value", float(self.h_value))
        object.__setattr__(self, "mc_std_error", _frozen_array(se))


# ---------------------------------------------------------------------------
# seeding

def rng_for(seed, *branch):
    """Deterministic generator for a derived stream.

    All randomness flows from one 64-bit root seed; ``branch`` elements
    (ints or labels, hashed stably) select a child stream through the
    SeedSequence spawn-key mechanism, so independent components never
    share a stream.
    """
    key = tuple(
        b if isinstance(b, (int, np.integer)) else zlib.crc32(str(b).encode())
        for b in branch
    )
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# ---------------------------------------------------------------------------
# interchange formats

def _matrix_as_lists(arr):
    return [[float(v) for v in row] for row in np.asarray(arr, dtype=float)]


def problem_to_json(problem):
    """JSON-ready dict {design, response, sigma, lambda, tau}."""
    return {
        "design": _matrix_as_lists(problem.design),
        "response": [float(v) for v in problem.response],
        "sigma": problem.sigma,
        "lambda": problem.lam,
        "tau": problem.tau,
    }


def problem_from_json(doc):
    """Inverse of :func:`problem_to_json` with dimension checking."""
    try:
        design = np.array(doc["design"], dtype=float)
        response = np.array(doc["response"], dtype=float)
        sigma = float(doc["sigma"])
        lam = float(doc["lambda"])
        tau = float(doc["tau"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed problem document: {exc}") from exc
    if design.ndim != 2:
        raise DataError("design must be a rectangular array of arrays")
    return RegressionProblem(design, response, sigma, lam, tau)


def _read_csv_array(path, header=False):
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    except ValueError as exc:
        raise DataError(f"could not parse CSV {path}: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise DataError(f"non-finite entry in {path}")
    return arr


def load_problem(path, format="json", response_path=None, sigma=None, lam=None,
                 tau=None, header=False):
    """Load a problem from disk.

    ``format='json'``: single document {design, response, sigma, lambda, tau}.
    ``format='csv-pair'``: ``path`` is the design CSV and ``response_path``
    the response CSV (one column); sigma/lam/tau must then be supplied since
    CSV carries no metadata.  CSVs have no header row unless ``header``.
    """
    if format == "json":
        if not os.path.exists(path):
            raise DataError(f"no such file: {path}")
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"could not parse JSON {path}: {exc}") from exc
        return problem_from_json(doc)
    if format == "csv-pair":
        if response_path is None:
            raise DataError("csv-pair format needs a response file")
        if sigma is None or lam is None or tau is None:
            raise DataError("csv-pair format needs explicit sigma, lambda and tau")
        design = _read_csv_array(path, header=header)
        response = _read_csv_array(response_path, header=header).reshape(-1)
        return RegressionProblem(design, response, sigma, lam, tau)
    raise DataError(f"unknown problem format {format!r}")


def save_problem(problem, path):
    """Write the JSON interchange form; round-trips bit-exactly."""
    with open(path, "w") as fh:
        json.dump(problem_to_json(problem), fh, sort_keys=True)
        fh.write("\n")


def write_csv(path, rows, header=None):
    """Write rows of floats (or strings) with repr-exact float formatting.

    repr round-trips doubles exactly, which is what makes byte-identical
    reruns possible; never use locale- or precision-truncated formatting.
    """
    def fmt(v):
        if isinstance(v, str):
            return v
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return repr(float(v))

    with open(path, "w") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
