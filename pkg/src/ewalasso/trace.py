"""Trace regression: nuclear-norm penalised fits and the matrix aggregate.

The model observes y_i = <X_i, B*> + noise for m1 x m2 coefficient matrices,
with the nuclear norm playing the l1 role: the potential is

    V(B) = (1/2n) sum_i (y_i - <X_i, B>)^2 + lam * ||B||_nuc,

its proximal map is singular-value soft thresholding, and the temperature-tau
exponential-weights density is handled by the same vectorised Langevin chain
as the vector case.  Everything here works in the flattened m1*m2 coordinate
space with row-major reshaping throughout.
"""

import json
import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import backends
from .compatibility import reduction_projectors
from .model import DataError, NumericalError, _frozen_array, make_report, rng_for
from .sampler import SamplerConfig, effective_sample_size

_SV_CUTOFF = 1e-12


@dataclass(frozen=True)
class TraceProblem:
    """Immutable bundle (X_1..X_n, y, sigma, lam, tau) for trace regression.

    ``design_tensor`` stacks the n measurement matrices as an
    (n, m1, m2) array; second moments of the flattened design are cached.
    """

    design_tensor: np.ndarray
    response: np.ndarray
    sigma: float
    lam: float
    tau: float

    def __post_init__(self):
        tensor = np.asarray(self.design_tensor, dtype=float)
        y = np.asarray(self.response, dtype=float).reshape(-1)
        if tensor.ndim != 3 or min(tensor.shape) < 1:
            raise DataError(
                f"design_tensor must have shape (n, m1, m2), got {tensor.shape}"
            )
        if y.shape[0] != tensor.shape[0]:
            raise DataError(
                f"response length {y.shape[0]} does not match "
                f"{tensor.shape[0]} measurements"
            )
        if not np.all(np.isfinite(tensor)):
            raise DataError("design_tensor contains non-finite entries")
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
        object.__setattr__(self, "design_tensor", _frozen_array(tensor))
        object.__setattr__(self, "response", _frozen_array(y))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def n(self):
        return self.design_tensor.shape[0]

    @property
    def m1(self):
        return self.design_tensor.shape[1]

    @property
    def m2(self):
        return self.design_tensor.shape[2]

    @cached_property
    def flat_design(self):
        """The n x (m1 m2) matrix of row-major vectorised measurements."""
        return _frozen_array(
            self.design_tensor.reshape(self.n, self.m1 * self.m2)
        )

    @cached_property
    def flat_gram(self):
        """Second moment (1/n) sum_i vec(X_i) vec(X_i)^T."""
        v = self.flat_design
        return _frozen_array(v.T @ v / self.n)

    @cached_property
    def flat_xty(self):
        """Vectorised cross moment vec((1/n) sum_i y_i X_i)."""
        return _frozen_array(self.flat_design.T @ self.response / self.n)

    def inner(self, mat):
        """Vector of pairings <X_i, mat> for i = 1..n."""
        mat = self._check_matrix(mat)
        return self.flat_design @ mat.ravel()

    def _check_matrix(self, mat):
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (self.m1, self.m2):
            raise DataError(
                f"matrix has shape {mat.shape}, expected {(self.m1, self.m2)}"
            )
        return mat

    def potential(self, mat):
        """V(B) = (1/2n) sum_i (y_i - <X_i,B>)^2 + lam ||B||_nuc."""
        resid = self.response - self.inner(mat)
        return float(resid @ resid) / (2.0 * self.n) + self.lam * nuclear_norm(
            np.asarray(mat, dtype=float)
        )

    def with_params(self, sigma=None, lam=None, tau=None):
        """Copy of the problem with some of (sigma, lam, tau) replaced."""
        return TraceProblem(
            design_tensor=self.design_tensor,
            response=self.response,
            sigma=self.sigma if sigma is None else sigma,
            lam=self.lam if lam is None else lam,
            tau=self.tau if tau is None else tau,
        )


def nuclear_norm(mat):
    """Sum of singular values."""
    return float(np.linalg.svd(np.asarray(mat, dtype=float),
                               compute_uv=False).sum())


def trace_problem_to_json(problem):
    """JSON-ready dict {shape, tensor, response, sigma, lambda, tau}."""
    return {
        "shape": [problem.n, problem.m1, problem.m2],
        "tensor": [
            [[float(v) for v in row] for row in mat]
            for mat in problem.design_tensor
        ],
        "response": [float(v) for v in problem.response],
        "sigma": problem.sigma,
        "lambda": problem.lam,
        "tau": problem.tau,
    }


def trace_problem_from_json(doc):
    """Inverse of :func:`trace_problem_to_json` with shape checking."""
    try:
        shape = tuple(int(v) for v in doc["shape"])
        tensor = np.array(doc["tensor"], dtype=float)
        response = np.array(doc["response"], dtype=float)
        sigma = float(doc["sigma"])
        lam = float(doc["lambda"])
        tau = float(doc["tau"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed trace problem document: {exc}") from exc
    if tensor.shape != shape:
        raise DataError(
            f"tensor shape {tensor.shape} does not match declared {shape}"
        )
    return TraceProblem(tensor, response, sigma, lam, tau)


def load_trace_problem(path):
    """Read the JSON interchange form of a trace problem from disk."""
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"could not parse JSON {path}: {exc}") from exc
    return trace_problem_from_json(doc)


def save_trace_problem(problem, path):
    """Write the JSON interchange form; round-trips bit-exactly."""
    with open(path, "w") as fh:
        json.dump(trace_problem_to_json(problem), fh, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class MatrixEstimate:
    """A fitted coefficient matrix with its singular spectrum.

    ``method`` records provenance: 'nnp-ls' for the nuclear-norm penalised
    least-squares minimiser, 'ewa-sampler' for the sampled aggregate mean.
    Singular values below 1e-12 of the largest are clipped to zero.
    """

    matrix: np.ndarray
    singular_values: np.ndarray
    method: str
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        if self.method not in ("nnp-ls", "ewa-sampler"):
            raise DataError(f"unknown estimate method {self.method!r}")
        mat = np.asarray(self.matrix, dtype=float)
        sv = np.asarray(self.singular_values, dtype=float).reshape(-1)
        if mat.ndim != 2:
            raise DataError("estimate matrix must be 2-D")
        if np.any(np.diff(sv) > 0) or np.any(sv < 0):
            raise DataError("singular values must be nonincreasing and >= 0")
        fresh = np.linalg.svd(mat, compute_uv=False)
        scale = max(1.0, float(fresh[0]) if fresh.size else 1.0)
        if sv.shape != fresh.shape or np.abs(sv - _clip_spectrum(fresh)).max() > 1e-10 * scale:
            raise DataError("singular values do not match the matrix")
        object.__setattr__(self, "matrix", _frozen_array(mat))
        object.__setattr__(self, "singular_values", _frozen_array(sv))

    @classmethod
    def from_matrix(cls, mat, method, iterations=0, converged=True):
        mat = np.asarray(mat, dtype=float)
        sv = _clip_spectrum(np.linalg.svd(mat, compute_uv=False))
        return cls(matrix=mat, singular_values=sv, method=method,
                   iterations=iterations, converged=converged)

    @property
    def rank(self):
        return int(np.count_nonzero(self.singular_values))


def _clip_spectrum(sv):
    sv = np.asarray(sv, dtype=float).copy()
    if sv.size:
        sv[sv < _SV_CUTOFF * max(sv[0], 1.0)] = 0.0
    return sv


def trace_loss(problem, a, b):
    """Prediction loss (1/n) sum_i <X_i, A - B>^2 between two matrices."""
    diff = problem._check_matrix(a) - problem._check_matrix(b)
    vals = problem.flat_design @ diff.ravel()
    return float(vals @ vals) / problem.n


def v_x(design_tensor):
    """Spectral scale of the design: the larger operator norm root of the
    two averaged second-moment matrices (1/n) sum X_i X_i^T and
    (1/n) sum X_i^T X_i."""
    tensor = np.asarray(design_tensor, dtype=float)
    if tensor.ndim != 3 or tensor.shape[0] < 1:
        raise DataError("design tensor must be a nonempty (n, m1, m2) array")
    n = tensor.shape[0]
    left = np.einsum("nab,ncb->ac", tensor, tensor) / n
    right = np.einsum("nab,nac->bc", tensor, tensor) / n
    top = max(float(np.linalg.eigvalsh(left)[-1]),
              float(np.linalg.eigvalsh(right)[-1]))
    return math.sqrt(max(top, 0.0))


def calibrate_lambda_matrix(sigma, vx, n, m1, m2, delta):
    """Smallest penalty dominating the spectral noise with failure mass delta:
    2 sigma v_X sqrt((2/n) log((m1+m2)/delta))."""
    if not 0 < delta < 1:
        raise DataError(f"delta must lie in (0, 1), got {delta}")
    if n < 1 or m1 < 1 or m2 < 1:
        raise DataError("n, m1, m2 must be positive")
    if sigma < 0 or vx < 0:
        raise DataError("sigma and v_x must be >= 0")
    return 2.0 * sigma * vx * math.sqrt(2.0 / n * math.log((m1 + m2) / delta))


def _svt(mat, threshold):
    left, sing, right_t = np.linalg.svd(mat, full_matrices=False)
    kept = np.maximum(sing - threshold, 0.0)
    return (left * kept) @ right_t


def nnp_objective(problem, mat):
    """The penalised least-squares objective V at ``mat``."""
    return problem.potential(mat)


def fit_nnp_ls(problem, tol=1e-12, max_iter=20000):
    """Minimise V by proximal gradient with singular-value thresholding.

    Starts from zero, steps against the smooth gradient with step 1/L
    (L = top eigenvalue of the flattened second moment) and applies the
    nuclear prox; stops once the objective stalls below ``tol`` relative.
    The objective decreases monotonically; on hitting ``max_iter`` the
    best iterate is returned with ``converged=False``.
    """
    if max_iter < 1:
        raise DataError("max_iter must be >= 1")
    m1, m2 = problem.m1, problem.m2
    gram = problem.flat_gram
    xty = problem.flat_xty
    lip = float(np.linalg.eigvalsh(gram)[-1])
    step = 1.0 / max(lip, 1e-300)
    const = float(problem.response @ problem.response) / (2.0 * problem.n)
    vec = np.zeros(m1 * m2)
    objective = const
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = gram @ vec - xty
        nxt = _svt((vec - step * grad).reshape(m1, m2), step * problem.lam)
        vec = nxt.ravel()
        new_obj = (
            0.5 * float(vec @ (gram @ vec)) - float(vec @ xty) + const
            + problem.lam * nuclear_norm(nxt)
        )
        if objective - new_obj <= tol * max(1.0, abs(new_obj)):
            objective = new_obj
            converged = True
            break
        objective = new_obj
    return MatrixEstimate.from_matrix(
        vec.reshape(m1, m2), "nnp-ls", iterations=iterations,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# sampling

def default_matrix_config(problem, n_samples=5000, seed=0, moreau_gamma=None):
    """Stable Langevin configuration for the flattened matrix problem.

    Mirrors the vector default: envelope = tau over the top flattened-Gram
    eigenvalue (capped at tau), step a quarter of it, burn-in ten times the
    retained draws.
    """
    eig_max = float(np.linalg.eigvalsh(problem.flat_gram)[-1])
    gamma = problem.tau / max(1.0, eig_max)
    if moreau_gamma is not None:
        gamma = float(moreau_gamma)
    return SamplerConfig(
        step_size=gamma / 4.0,
        moreau_gamma=gamma,
        burn_in=10 * n_samples,
        n_samples=n_samples,
        thinning=5,
        seed=seed,
    )


@dataclass(frozen=True)
class MatrixSampleSet:
    """Thinned chain states in flattened coordinates, tied to the problem."""

    draws: np.ndarray
    config: SamplerConfig
    problem: TraceProblem

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        expected = (self.config.n_samples, self.problem.m1 * self.problem.m2)
        if draws.shape != expected:
            raise DataError(f"draws must have shape {expected}")
        if not np.all(np.isfinite(draws)):
            raise DataError("draws contain non-finite values")
        object.__setattr__(self, "draws", _frozen_array(draws))

    @property
    def n_samples(self):
        return self.draws.shape[0]

    def matrices(self):
        """Draws reshaped to (n_samples, m1, m2)."""
        return self.draws.reshape(-1, self.problem.m1, self.problem.m2)


def sample_matrix_posterior(problem, config=None):
    """Proximal Langevin chain for the matrix weights density.

    Identical stepping rule to the vector sampler on the flattened space;
    only the proximal map differs (singular-value thresholding).  Started
    at the penalised least-squares fit; deterministic given the seed.
    """
    if problem.m1 * problem.m2 > 400:
        raise DataError("matrix sampling is limited to m1*m2 <= 400")
    if config is None:
        config = default_matrix_config(problem)
    start = fit_nnp_ls(problem, tol=1e-10, max_iter=5000).matrix.ravel().copy()
    noise = rng_for(config.seed, "matrix-langevin").standard_normal(
        (config.total_steps, problem.m1 * problem.m2)
    )
    draws = np.empty((config.n_samples, problem.m1 * problem.m2))
    status = backends.matrix_langevin_chain(
        problem.flat_gram,
        problem.flat_xty,
        problem.lam,
        problem.tau,
        config.step_size,
        config.moreau_gamma,
        start,
        noise,
        draws,
        config.burn_in,
        config.thinning,
        problem.m1,
        problem.m2,
    )
    if status != 0:
        raise NumericalError(
            "matrix Langevin chain diverged within "
            f"{config.total_steps} steps (step_size={config.step_size:g}, "
            f"moreau_gamma={config.moreau_gamma:g}); reduce the step"
        )
    return MatrixSampleSet(draws=draws, config=config, problem=problem)


def _g_of_draws(problem, samples):
    """Series G(U) = ||U||^2_{L2(X)} + lam ||U||_nuc over the draws."""
    draws = samples.draws
    quad = np.einsum("ni,ni->n", draws @ problem.flat_gram, draws)
    nucs = np.linalg.svd(samples.matrices(), compute_uv=False).sum(axis=-1)
    return quad + problem.lam * nucs


def matrix_h(problem, samples, mean=None):
    """Peakedness of the matrix weights density from chain draws.

    H = m1 m2 tau - int G dpi + G(mean) with
    G(U) = ||U||^2_{L2(X)} + lam ||U||_nuc; returns the estimate and its
    Monte Carlo standard error.  Always at most m1 m2 tau (Jensen) and
    nonnegative (G convex, minimised along the density's own mean).
    """
    g_draws = _g_of_draws(problem, samples)
    if mean is None:
        mean = samples.matrices().mean(axis=0)
    mean = problem._check_matrix(mean)
    flat = mean.ravel()
    g_mean = float(flat @ (problem.flat_gram @ flat)) + problem.lam * nuclear_norm(mean)
    value = problem.m1 * problem.m2 * problem.tau - float(g_draws.mean()) + g_mean
    ess = effective_sample_size(g_draws)
    se = (
        float(g_draws.std(ddof=1)) / math.sqrt(ess)
        if g_draws.size > 1
        else 0.0
    )
    return value, se


def matrix_h_identity(problem, mean):
    """Peakedness from the aggregate mean alone (integration-by-parts route).

    H = ||M||^2_{L2(X)} + lam ||M||_nuc - <M, (1/n) sum y_i X_i>; agrees
    with the draw-based route whenever the chain has mixed.
    """
    mean = problem._check_matrix(mean)
    flat = mean.ravel()
    return float(
        flat @ (problem.flat_gram @ flat)
        + problem.lam * nuclear_norm(mean)
        - flat @ problem.flat_xty
    )


def ewa_matrix(samples):
    """Aggregate-mean estimate with Monte Carlo diagnostics.

    Returns the 'ewa-sampler' estimate and a dict holding both peakedness
    routes, the Monte Carlo standard error of the draw-based one, and the
    prediction spread around the mean.
    """
    problem = samples.problem
    mean = samples.matrices().mean(axis=0)
    h_draws, h_se = matrix_h(problem, samples, mean=mean)
    centred = samples.draws - mean.ravel()
    spread = np.einsum("ni,ni->n", centred @ problem.flat_gram, centred)
    estimate = MatrixEstimate.from_matrix(mean, "ewa-sampler")
    info = {
        "h": h_draws,
        "h_mc_std_error": h_se,
        "h_identity": matrix_h_identity(problem, mean),
        "spread": float(spread.mean()),
        "spread_bound": problem.m1 * problem.m2 * problem.tau,
    }
    return estimate, info


# ---------------------------------------------------------------------------
# reduction projectors and checks

def project_Jc(b_bar, J, u):
    """Part of ``u`` invisible to the leading singular directions of b_bar.

    P(U) = (I - V1_J V1_J^T) U (I - V2_J V2_J^T) where the V's are the
    singular bases of ``b_bar`` restricted to index set ``J``.
    """
    keep, _ = reduction_projectors(b_bar, J)
    return keep(np.asarray(u, dtype=float))


def project_Jc_perp(b_bar, J, u):
    """Complement of :func:`project_Jc`; its range has rank at most 2|J|."""
    _, complement = reduction_projectors(b_bar, J)
    return complement(np.asarray(u, dtype=float))


def check_matrix_variance_bound(problem, samples):
    """Spread of the density about its mean never exceeds m1 m2 tau."""
    mean = samples.draws.mean(axis=0)
    centred = samples.draws - mean
    spread = np.einsum("ni,ni->n", centred @ problem.flat_gram, centred)
    lhs = float(spread.mean())
    ess = effective_sample_size(spread)
    se = float(spread.std(ddof=1)) / math.sqrt(ess) if spread.size > 1 else 0.0
    return make_report(
        lhs,
        problem.m1 * problem.m2 * problem.tau,
        tolerance=3.0 * se,
        mc_std_error=se,
        effective_samples=ess,
    )


def check_matrix_concentration(problem, samples, t):
    """Tail mass of V above its mean plus tau sqrt(m1 m2) t.

    Log-concavity gives probability at most 2 exp(-t/16) to the exceedance
    event; the empirical frequency is compared against that bound with a
    three-standard-error binomial tolerance (autocorrelation-adjusted).
    """
    if t <= 0:
        raise DataError("t must be positive")
    draws = samples.matrices()
    resid = problem.response[None, :] - samples.draws @ problem.flat_design.T
    nucs = np.linalg.svd(draws, compute_uv=False).sum(axis=-1)
    v_draws = 0.5 * np.einsum("ni,ni->n", resid, resid) / problem.n + (
        problem.lam * nucs
    )
    level = float(v_draws.mean()) + problem.tau * math.sqrt(
        problem.m1 * problem.m2
    ) * t
    exceed = (v_draws > level).astype(float)
    freq = float(exceed.mean())
    ess = effective_sample_size(exceed) if exceed.std() > 0 else exceed.size
    se = math.sqrt(max(freq * (1.0 - freq), 1.0 / exceed.size) / ess)
    bound = 2.0 * math.exp(-t / 16.0)
    return make_report(
        freq,
        bound,
        tolerance=3.0 * se,
        mc_std_error=se,
        effective_samples=ess,
        threshold=level,
    )
