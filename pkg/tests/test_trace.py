"""Trace-regression analogue: nuclear-norm fit, matrix sampler, H routes."""

import numpy as np
import pytest

from ewalasso.model import DataError, rng_for
from ewalasso.sampler import default_config, ewa_from_samples, sample_posterior
from ewalasso.trace import (
    MatrixEstimate,
    TraceProblem,
    calibrate_lambda_matrix,
    check_matrix_concentration,
    check_matrix_variance_bound,
    default_matrix_config,
    ewa_matrix,
    fit_nnp_ls,
    load_trace_problem,
    matrix_h,
    matrix_h_identity,
    nnp_objective,
    nuclear_norm,
    sample_matrix_posterior,
    save_trace_problem,
    trace_loss,
    trace_problem_from_json,
    trace_problem_to_json,
    v_x,
)


def _entry_sampling_tensor(m1, m2):
    """One observation per entry, scaled so v_x = sqrt(max(m1, m2))."""
    n = m1 * m2
    tensor = np.zeros((n, m1, m2))
    for k in range(n):
        tensor[k, k // m2, k % m2] = np.sqrt(n)
    return tensor


def _entry_instance(m1=4, m2=4, sigma=0.3, lam=0.5, tau=0.02, seed=0, rank=1):
    rng = rng_for(seed, "trace-fixture")
    tensor = _entry_sampling_tensor(m1, m2)
    b_star = sum(np.outer(rng.standard_normal(m1), rng.standard_normal(m2))
                 for _ in range(rank)) / rank
    response = (np.einsum("nab,ab->n", tensor, b_star)
                + sigma * rng.standard_normal(m1 * m2))
    return TraceProblem(tensor, response, sigma, lam, tau), b_star


def _gaussian_instance(m1=3, m2=3, n=40, sigma=0.3, lam=0.4, tau=0.03,
                       seed=0):
    rng = rng_for(seed, "trace-gauss")
    tensor = rng.standard_normal((n, m1, m2))
    b_star = np.outer(rng.standard_normal(m1), rng.standard_normal(m2))
    response = (np.einsum("nab,ab->n", tensor, b_star)
                + sigma * rng.standard_normal(n))
    return TraceProblem(tensor, response, sigma, lam, tau), b_star


class TestTraceProblem:
    def test_flat_views_match_definitions(self):
        prob, _ = _gaussian_instance()
        n, m1, m2 = prob.design_tensor.shape
        flat = prob.design_tensor.reshape(n, m1 * m2)
        np.testing.assert_allclose(prob.flat_design, flat, atol=0)
        np.testing.assert_allclose(prob.flat_gram, flat.T @ flat / n,
                                   atol=1e-12)
        np.testing.assert_allclose(prob.flat_xty,
                                   flat.T @ prob.response / n, atol=1e-12)

    def test_inner_product_is_trace_pairing(self):
        prob, b = _gaussian_instance()
        direct = np.einsum("nab,ab->n", prob.design_tensor, b)
        np.testing.assert_allclose(prob.inner(b), direct, atol=1e-12)

    def test_shape_validation(self):
        rng = rng_for(0, "bad-trace")
        with pytest.raises(DataError):
            TraceProblem(rng.standard_normal((5, 2, 2)),
                         rng.standard_normal(4), 1.0, 0.1, 0.1)

    def test_potential_by_hand(self):
        tensor = _entry_sampling_tensor(2, 2)
        response = np.zeros(4)
        prob = TraceProblem(tensor, response, 1.0, 0.5, 0.1)
        mat = np.eye(2)
        # residual: -sqrt(4)*vec entries; (1/(2n))*sum = (4*1+4*1)/8 = 1 on
        # the two diagonal observations; nuclear norm 2
        val = prob.potential(mat)
        assert val == pytest.approx(0.5 / 4 * (4 + 4) + 0.5 * 2)

    def test_json_round_trip(self, tmp_path):
        prob, _ = _gaussian_instance()
        path = tmp_path / "trace.json"
        save_trace_problem(prob, path)
        back = load_trace_problem(path)
        np.testing.assert_array_equal(back.design_tensor, prob.design_tensor)
        np.testing.assert_array_equal(back.response, prob.response)
        doc = trace_problem_to_json(prob)
        assert set(doc) == {"shape", "tensor", "response", "sigma",
                            "lambda", "tau"}
        again = trace_problem_from_json(doc)
        np.testing.assert_array_equal(again.design_tensor,
                                      prob.design_tensor)


class TestNuclearNorm:
    def test_identity(self):
        assert nuclear_norm(np.eye(3)) == pytest.approx(3.0, abs=1e-12)

    def test_rank_one(self):
        u = np.array([3.0, 4.0])
        v = np.array([1.0, 0.0, 0.0])
        assert nuclear_norm(np.outer(u, v)) == pytest.approx(5.0, abs=1e-12)


class TestDesignScale:
    def test_entry_sampling_value(self):
        # analytic: (1/n) sum X X' = max(m1,m2) * I on the larger side
        assert v_x(_entry_sampling_tensor(3, 5)) == pytest.approx(
            np.sqrt(5.0), abs=1e-10)
        assert v_x(_entry_sampling_tensor(4, 4)) == pytest.approx(
            2.0, abs=1e-10)

    def test_calibration_formula(self):
        # frozen: mpmath 30-digit evaluation of
        # 2*sigma*vx*sqrt((2/n)*log((m1+m2)/delta))
        value = calibrate_lambda_matrix(1.0, 2.0, 200, 8, 8, 0.05)
        assert value == pytest.approx(0.9606931660665665, abs=1e-12)

    def test_delta_validation(self):
        with pytest.raises(DataError):
            calibrate_lambda_matrix(1.0, 1.0, 10, 2, 2, 1.2)


class TestNnpFit:
    def test_entry_sampling_closed_form(self):
        # independent oracle: with one scaled observation per entry the
        # minimiser is singular-value soft-thresholding of the rearranged
        # response
        prob, _ = _entry_instance(m1=5, m2=4, lam=0.4, seed=3)
        fit = fit_nnp_ls(prob)
        assert fit.converged
        y_bar = prob.response.reshape(5, 4) / np.sqrt(20)
        u, s, vt = np.linalg.svd(y_bar, full_matrices=False)
        expect = (u * np.maximum(s - prob.lam, 0.0)) @ vt
        np.testing.assert_allclose(fit.matrix, expect, atol=1e-10)

    def test_zero_when_penalty_dominates(self):
        prob, _ = _entry_instance(m1=3, m2=3, seed=5)
        y_bar = prob.response.reshape(3, 3) / 3.0
        big = prob.with_params(lam=1.1 * np.linalg.svd(y_bar)[1][0])
        fit = fit_nnp_ls(big)
        np.testing.assert_allclose(fit.matrix, 0.0, atol=1e-12)

    def test_objective_no_worse_than_competitors(self):
        prob, b_star = _gaussian_instance(seed=2)
        fit = fit_nnp_ls(prob)
        base = nnp_objective(prob, fit.matrix)
        rng = rng_for(9, "nnp-compete")
        assert base <= nnp_objective(prob, b_star) + 1e-12
        assert base <= nnp_objective(prob, np.zeros_like(b_star)) + 1e-12
        for _ in range(4):
            other = fit.matrix + 0.05 * rng.standard_normal(fit.matrix.shape)
            assert base <= nnp_objective(prob, other) + 1e-12

    def test_nonconvergence_reported(self):
        prob, _ = _gaussian_instance(seed=4)
        fit = fit_nnp_ls(prob, tol=1e-16, max_iter=2)
        assert not fit.converged

    def test_estimate_invariants(self):
        prob, _ = _gaussian_instance(seed=1)
        fit = fit_nnp_ls(prob)
        assert fit.method == "nnp-ls"
        sv = fit.singular_values
        assert np.all(np.diff(sv) <= 1e-12)
        assert np.all(sv >= 0)
        with pytest.raises(DataError):
            MatrixEstimate(matrix=fit.matrix,
                           singular_values=sv + 1.0,
                           method="nnp-ls")


class TestTraceLoss:
    def test_matches_definition(self):
        prob, b = _gaussian_instance()
        other = np.zeros_like(b)
        n = prob.design_tensor.shape[0]
        expect = np.sum(prob.inner(b) ** 2) / n
        assert trace_loss(prob, b, other) == pytest.approx(expect, rel=1e-12)


class TestMatrixSampler:
    def test_deterministic(self):
        prob, _ = _entry_instance(m1=3, m2=3, seed=7)
        config = default_matrix_config(prob, n_samples=200, seed=5)
        a = sample_matrix_posterior(prob, config)
        b = sample_matrix_posterior(prob, config)
        np.testing.assert_array_equal(a.draws, b.draws)

    def test_matrices_view(self):
        prob, _ = _entry_instance(m1=3, m2=2, seed=7)
        samples = sample_matrix_posterior(
            prob, default_matrix_config(prob, n_samples=150, seed=1))
        mats = samples.matrices()
        assert mats.shape == (150, 3, 2)
        np.testing.assert_array_equal(mats.reshape(150, 6), samples.draws)

    def test_h_routes_and_window(self):
        prob, _ = _entry_instance(m1=3, m2=3, tau=0.05, seed=2)
        config = default_matrix_config(prob, n_samples=2500, seed=3,
                                       moreau_gamma=0.02 * prob.tau)
        samples = sample_matrix_posterior(prob, config)
        value, se = matrix_h(prob, samples)
        cap = 9 * prob.tau
        assert -3 * se <= value <= cap + 3 * se
        est, info = ewa_matrix(samples)
        ident = matrix_h_identity(prob, est.matrix)
        assert abs(ident - value) <= 3 * se + 0.1 * cap
        assert est.method == "ewa-sampler"

    def test_single_entry_reduces_to_vector_chain(self):
        # m1 = m2 = 1: the trace problem is a one-coefficient regression,
        # so the matrix pipeline must match the vector pipeline to MC noise
        rng = rng_for(11, "reduction")
        n = 30
        x = rng.standard_normal(n)
        x = x / np.sqrt(x @ x / n)
        b_true = 0.8
        y = x * b_true + 0.2 * rng.standard_normal(n)
        prob_m = TraceProblem(x.reshape(n, 1, 1), y, 0.2, 0.3, 0.05)
        from ewalasso.model import RegressionProblem
        prob_v = RegressionProblem(x.reshape(n, 1), y, 0.2, 0.3, 0.05)
        cfg_m = default_matrix_config(prob_m, n_samples=4000, seed=21,
                                      moreau_gamma=0.02 * prob_m.tau)
        cfg_v = default_config(prob_v, n_samples=4000, seed=22,
                               moreau_gamma=0.02 * prob_v.tau)
        est_m, _ = ewa_matrix(sample_matrix_posterior(prob_m, cfg_m))
        est_v = ewa_from_samples(sample_posterior(prob_v, cfg_v))
        se = np.hypot(est_v.mc_std_error[0],
                      np.std(est_m.matrix) / 40)  # crude second-route se
        assert est_m.matrix[0, 0] == pytest.approx(
            est_v.mean[0], abs=3 * est_v.mc_std_error[0] + 3 * se + 1e-3)


class TestMatrixChecks:
    def test_variance_bound(self):
        prob, _ = _entry_instance(m1=3, m2=3, tau=0.04, seed=6)
        samples = sample_matrix_posterior(
            prob, default_matrix_config(prob, n_samples=2000, seed=2,
                                        moreau_gamma=0.02 * prob.tau))
        report = check_matrix_variance_bound(prob, samples)
        assert report.passed
        assert report.rhs == pytest.approx(9 * prob.tau, rel=0.3)

    def test_concentration(self):
        prob, _ = _entry_instance(m1=3, m2=3, tau=0.01, seed=8)
        samples = sample_matrix_posterior(
            prob, default_matrix_config(prob, n_samples=4000, seed=3,
                                        moreau_gamma=0.02 * prob.tau))
        report = check_matrix_concentration(prob, samples, t=3.0)
        assert report.passed
        assert report.rhs >= 2 * np.exp(-3.0 / 16) - 1e-12
