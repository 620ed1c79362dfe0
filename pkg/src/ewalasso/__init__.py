"""Exponentially weighted aggregation with a Laplace prior.

A library and CLI for the posterior-mean-style aggregate of l1-penalised
least squares under exponential weights: exact closed forms for orthonormal
designs, a dense-grid integration oracle for p <= 3, a proximal Langevin
sampler for general designs, the nuclear-norm trace-regression analogue,
compatibility-factor computation, and a replication harness that checks the
associated oracle inequalities empirically.
"""

from .backends import active_backend
from .model import (
    BoundReport,
    DataError,
    EwaEstimate,
    NumericalError,
    RegressionProblem,
    calibrate_lambda,
    load_problem,
    make_report,
    potential,
    prediction_loss,
    rng_for,
)
from .lasso import LassoFit, fit_lasso, lasso_sure
from .shrinkage import (
    ShrinkageInputs,
    ewa_closed_form,
    h_closed_form,
    h_curve,
    psi,
    shrinkage_weight,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DataError",
    "EwaEstimate",
    "LassoFit",
    "NumericalError",
    "RegressionProblem",
    "ShrinkageInputs",
    "active_backend",
    "calibrate_lambda",
    "ewa_closed_form",
    "fit_lasso",
    "h_closed_form",
    "h_curve",
    "lasso_sure",
    "load_problem",
    "make_report",
    "potential",
    "prediction_loss",
    "psi",
    "rng_for",
    "shrinkage_weight",
]
