"""Shared fixtures: seeded problem factories used across the test modules."""

import numpy as np
import pytest

from ewalasso.model import RegressionProblem, rng_for

ACCEPTANCE_LINES = []


def record_acceptance(line):
    """Collect a one-line verdict so the terminal summary can replay it."""
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance summary")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def make_orthonormal_design(n, p, rng):
    """Random n x p design with X'X/n exactly the identity (up to fp error)."""
    if p > n:
        raise ValueError("orthonormal designs need p <= n")
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q[:, :p] * np.sqrt(n)


def make_general_design(n, p, rng):
    """Gaussian design rescaled so the largest column satisfies ||x||^2/n = 1."""
    design = rng.standard_normal((n, p))
    scale = np.sqrt(np.max(np.sum(design * design, axis=0)) / n)
    return design / scale


def _instance(kind, n, p, seed, sigma, lam, tau, sparsity):
    rng = rng_for(seed, "fixture", kind)
    if kind == "orthonormal":
        design = make_orthonormal_design(n, p, rng)
    else:
        design = make_general_design(n, p, rng)
    beta = np.zeros(p)
    support = rng.choice(p, size=min(sparsity, p), replace=False)
    beta[support] = rng.choice([-1.0, 1.0], size=support.size)
    response = design @ beta + sigma * rng.standard_normal(n)
    problem = RegressionProblem(design, response, sigma, lam, tau)
    return problem, beta


@pytest.fixture
def orthonormal_problem():
    def build(n=16, p=4, seed=0, sigma=0.5, lam=0.4, tau=0.1, sparsity=2):
        return _instance("orthonormal", n, p, seed, sigma, lam, tau, sparsity)
    return build


@pytest.fixture
def general_problem():
    def build(n=20, p=6, seed=0, sigma=0.5, lam=0.4, tau=0.1, sparsity=2):
        return _instance("general", n, p, seed, sigma, lam, tau, sparsity)
    return build
