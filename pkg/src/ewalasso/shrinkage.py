"""Closed forms for orthonormal designs.

When X^T X / n = I the exponential-weights posterior factorises over
coordinates and everything is expressible through the scaled complementary
error function

    Psi_v(t) = e^(t^2/2v) * (1/sqrt(2 pi v)) * int_t^inf e^(-u^2/2v) du,

namely the shrinkage weight w, the aggregate mean (a soft-threshold-like
shrinkage of the least-squares pilot), the per-coordinate posterior variance
and the peakedness functional H(tau) with its temperature-free profile
h(lambda_bar, z).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, ndtr

from .model import DataError, EwaEstimate, NumericalError, as_coefficients

_SQRT2PI = math.sqrt(2.0 * math.pi)
# e^(t^2/2) * tail exceeds the double range once t < -sqrt(2 log DBL_MAX)
# (~ -37.68); refuse slightly before the wall.
_NEG_LIMIT = -37.5


def psi(v, t):
    """Scaled complementary error function Psi_v(t) = Psi_1(t / sqrt(v)).

    Evaluated as 0.5 * erfcx(t / sqrt(2 v)), which is stable for every
    nonnegative scaled argument and for moderately negative ones.  For
    t/sqrt(v) below about -37.7 the function's true value exceeds the double
    range, so a NumericalError is raised rather than returning inf.
    """
    if v <= 0:
        raise DataError(f"psi needs v > 0, got {v}")
    x = np.asarray(t, dtype=float) / math.sqrt(v)
    if np.min(x, initial=0.0) < _NEG_LIMIT:
        raise NumericalError(
            f"psi overflows double precision for t/sqrt(v) < {_NEG_LIMIT}"
        )
    out = 0.5 * erfcx(x / math.sqrt(2.0))
    return float(out) if np.isscalar(t) else out


def _psi1(x):
    # internal: scaled argument already, no range policing
    return 0.5 * erfcx(x / math.sqrt(2.0))


def _stable_q(a, b):
    """Psi_1(b)/Psi_1(a) for a < 0 without forming the overflowing Psi_1(a)."""
    return _psi1(b) * np.exp(-0.5 * a * a) / ndtr(-a)


def shrinkage_weight(tau, lam, t):
    """Weight w(tau, lam, t) = (Psi_tau(lam-t) - Psi_tau(lam+t)) / (sum).

    Defined for t >= 0; lies in [0, 1), vanishes at t = 0 and increases in t.
    For t > lam the numerator/denominator pair overflows long before w stops
    being representable, so that branch is evaluated through the ratio
    q = Psi_tau(lam+t)/Psi_tau(lam-t) as w = (1-q)/(1+q); q underflowing to
    zero then returns exactly the correct limit w = 1.
    """
    if tau <= 0:
        raise DataError(f"shrinkage_weight needs tau > 0, got {tau}")
    if lam < 0:
        raise DataError(f"shrinkage_weight needs lam >= 0, got {lam}")
    t_arr = np.asarray(t, dtype=float)
    if np.min(t_arr, initial=0.0) < 0:
        raise DataError("shrinkage_weight is defined for t >= 0")
    rt = math.sqrt(tau)
    a = (lam - t_arr) / rt
    b = (lam + t_arr) / rt
    w = np.empty_like(a)
    pos = a >= 0
    if np.any(pos):
        pa = _psi1(a[pos])
        pb = _psi1(b[pos])
        w[pos] = (pa - pb) / (pa + pb)
    if np.any(~pos):
        q = _stable_q(a[~pos], b[~pos])
        w[~pos] = (1.0 - q) / (1.0 + q)
    return float(w) if np.isscalar(t) else w


def coordinate_variance(tau, lam, t):
    """Posterior variance of one coordinate under an orthonormal design.

    From the representation of the coordinate posterior as a two-component
    mixture of Gaussians truncated at 0 (means t -+ lam, variance tau,
    mixture weights proportional to Psi_1(a) and Psi_1(b) with
    a = (lam-t)/sqrt(tau), b = (lam+t)/sqrt(tau)):

        E beta^2 = tau + (Psi_a (t-lam)^2 + Psi_b (t+lam)^2)/(Psi_a+Psi_b)
                   - 2 lam sqrt(tau) / (sqrt(2 pi) (Psi_a+Psi_b)),

    and Var = E beta^2 - mean^2.  The t > lam branch uses the same stable
    ratio rewrite as the weight.
    """
    if tau <= 0:
        raise DataError(f"coordinate_variance needs tau > 0, got {tau}")
    t_arr = np.abs(np.asarray(t, dtype=float))
    rt = math.sqrt(tau)
    a = (lam - t_arr) / rt
    b = (lam + t_arr) / rt
    mu_plus = t_arr - lam
    mu_minus = t_arr + lam
    second = np.empty_like(a)
    pos = a >= 0
    if np.any(pos):
        pa = _psi1(a[pos])
        pb = _psi1(b[pos])
        denom = pa + pb
        second[pos] = (
            tau
            + (pa * mu_plus[pos] ** 2 + pb * mu_minus[pos] ** 2) / denom
            - 2.0 * lam * rt / (_SQRT2PI * denom)
        )
    if np.any(~pos):
        an = a[~pos]
        q = _stable_q(an, b[~pos])
        inv_pa = np.exp(-0.5 * an * an) / ndtr(-an)
        second[~pos] = (
            tau
            + (mu_plus[~pos] ** 2 + q * mu_minus[~pos] ** 2) / (1.0 + q)
            - 2.0 * lam * rt * inv_pa / (_SQRT2PI * (1.0 + q))
        )
    w = shrinkage_weight(tau, lam, t_arr)
    var = second - (t_arr - lam * w) ** 2
    var = np.maximum(var, 0.0)
    return float(var) if np.isscalar(t) else var


@dataclass(frozen=True)
class ShrinkageInputs:
    """Temperature, penalty and least-squares pilot for the closed forms."""

    tau: float
    lam: float
    ls_coefficients: np.ndarray

    def __post_init__(self):
        if self.tau <= 0:
            raise DataError("tau must be > 0")
        if self.lam < 0:
            raise DataError("lam must be >= 0")
        ls = np.asarray(self.ls_coefficients, dtype=float).reshape(-1)
        ls = as_coefficients(ls, ls.size)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "ls_coefficients", ls)


def ewa_closed_form(inputs):
    """Exact aggregate for an orthonormal design.

    Coordinatewise: sign(t_j) (|t_j| - lam * w(tau, lam, |t_j|)) with t the
    least-squares pilot; covariance is the diagonal of the per-coordinate
    closed-form variances.  The caller asserts orthonormality.
    """
    t = inputs.ls_coefficients
    mag = np.abs(t)
    w = shrinkage_weight(inputs.tau, inputs.lam, mag)
    mean = np.sign(t) * (mag - inputs.lam * w)
    var = coordinate_variance(inputs.tau, inputs.lam, mag)
    return EwaEstimate(
        mean=mean,
        covariance=np.diag(np.atleast_1d(var)),
        h_value=h_closed_form(inputs),
        method="closed-form",
        mc_std_error=np.zeros(t.size),
    )


def h_closed_form(inputs):
    """Peakedness functional H(tau) = sum_j lam (|t_j| - lam w_j)(1 - w_j).

    Nonnegative and bounded by p*tau for an orthonormal design.
    """
    mag = np.abs(inputs.ls_coefficients)
    w = shrinkage_weight(inputs.tau, inputs.lam, mag)
    return float(np.sum(inputs.lam * (mag - inputs.lam * w) * (1.0 - w)))


def h_profile(lambda_bar, z):
    """Temperature-free profile h(lambda_bar, z) of H(tau)/tau per coordinate."""
    w = shrinkage_weight(1.0, lambda_bar, z)
    return lambda_bar * (z - lambda_bar * w) * (1.0 - w)


def h_curve(lambda_bar, z_grid):
    """Evaluate h(lambda_bar, .) on an increasing nonnegative grid.

    Values lie in [0, 1] up to float fuzz; H(tau) <= p tau is exactly the
    statement that this profile never exceeds 1.
    """
    if lambda_bar <= 0:
        raise DataError("lambda_bar must be > 0")
    z = np.asarray(z_grid, dtype=float)
    if z.size and z.min() < 0:
        raise DataError("z grid must be nonnegative")
    return h_profile(lambda_bar, z)


def default_z_grid(lambda_bar, points=4000):
    """Canonical plotting grid [0, 2*lambda_bar]; the maximum sits inside it."""
    return np.linspace(0.0, 2.0 * lambda_bar, points)
