"""Problem container, penalty calibration, seeding and report plumbing."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ewalasso.model import (
    BoundReport,
    DataError,
    RegressionProblem,
    as_coefficients,
    calibrate_lambda,
    load_problem,
    ls_coefficients,
    make_report,
    potential,
    prediction_loss,
    problem_from_json,
    problem_to_json,
    rescale_columns,
    rng_for,
    save_problem,
    write_csv,
)


def _toy(n=6, p=3, seed=5):
    rng = rng_for(seed, "toy")
    design = rng.standard_normal((n, p))
    response = rng.standard_normal(n)
    return RegressionProblem(design, response, 1.0, 0.5, 0.2)


class TestRegressionProblem:
    def test_fields_are_read_only_arrays(self):
        prob = _toy()
        assert prob.design.flags.writeable is False
        assert prob.response.flags.writeable is False

    def test_gram_and_xty_match_definitions(self):
        prob = _toy()
        n = prob.design.shape[0]
        np.testing.assert_allclose(
            prob.gram, prob.design.T @ prob.design / n, atol=1e-14)
        np.testing.assert_allclose(
            prob.xty, prob.design.T @ prob.response / n, atol=1e-14)

    def test_shape_mismatch_rejected(self):
        rng = rng_for(0, "bad")
        with pytest.raises(DataError):
            RegressionProblem(rng.standard_normal((5, 2)),
                              rng.standard_normal(4), 1.0, 0.1, 0.1)

    def test_nonfinite_rejected(self):
        design = np.ones((4, 2))
        design_bad = design.copy()
        design_bad[0, 0] = np.nan
        with pytest.raises(DataError):
            RegressionProblem(design_bad, np.ones(4), 1.0, 0.1, 0.1)

    def test_parameter_ranges(self):
        design = np.eye(4)
        y = np.ones(4)
        # sigma = 0 and lam = 0 are legal (noiseless / unpenalised cases)
        RegressionProblem(design, y, 0.0, 0.0, 0.1)
        with pytest.raises(DataError):
            RegressionProblem(design, y, -1.0, 0.1, 0.1)
        with pytest.raises(DataError):
            RegressionProblem(design, y, 1.0, -0.1, 0.1)
        with pytest.raises(DataError):
            RegressionProblem(design, y, 1.0, 0.1, 0.0)

    def test_orthonormal_detection(self, orthonormal_problem, general_problem):
        prob, _ = orthonormal_problem()
        assert prob.is_orthonormal()
        prob2, _ = general_problem()
        assert not prob2.is_orthonormal()

    def test_with_params_replaces_only_given(self):
        prob = _toy()
        other = prob.with_params(tau=0.7)
        assert other.tau == 0.7
        assert other.lam == prob.lam
        np.testing.assert_array_equal(other.design, prob.design)

    def test_rescaled_meets_column_condition_exactly(self):
        prob = _toy()
        scaled = prob.rescaled()
        norms = np.sum(scaled.design ** 2, axis=0) / scaled.design.shape[0]
        assert np.max(norms) <= 1.0 + 1e-12


class TestRescaleColumns:
    def test_max_column_norm_is_one(self):
        rng = rng_for(2, "rescale")
        design = 3.0 * rng.standard_normal((10, 4))
        scaled = rescale_columns(design)
        norms = np.sum(scaled * scaled, axis=0) / 10
        assert np.max(norms) == pytest.approx(1.0, abs=1e-12)

    def test_zero_design_unchanged(self):
        design = np.zeros((5, 2))
        np.testing.assert_array_equal(rescale_columns(design), design)


class TestCalibrateLambda:
    def test_reference_value(self):
        # frozen: mpmath 50-digit evaluation of 2*sigma*sqrt((2/n)*log(p/delta))
        assert calibrate_lambda(1.0, 100, 200, 0.05) == pytest.approx(
            0.8145698074494059, abs=1e-15)

    def test_zero_noise_gives_zero(self):
        assert calibrate_lambda(0.0, 50, 10, 0.05) == 0.0

    @given(st.floats(0.1, 5.0), st.integers(10, 500),
           st.integers(2, 500), st.floats(0.01, 0.5))
    @settings(max_examples=50, deadline=None)
    def test_scales_linearly_in_sigma(self, sigma, n, p, delta):
        base = calibrate_lambda(1.0, n, p, delta)
        assert calibrate_lambda(sigma, n, p, delta) == pytest.approx(
            sigma * base, rel=1e-12)

    def test_monotone_in_dimension_and_confidence(self):
        lam = calibrate_lambda(1.0, 64, 64, 0.05)
        assert calibrate_lambda(1.0, 64, 128, 0.05) > lam
        assert calibrate_lambda(1.0, 64, 64, 0.01) > lam
        assert calibrate_lambda(1.0, 128, 64, 0.05) < lam

    def test_invalid_delta_rejected(self):
        with pytest.raises(DataError):
            calibrate_lambda(1.0, 10, 5, 0.0)
        with pytest.raises(DataError):
            calibrate_lambda(1.0, 10, 5, 1.5)


class TestLossesAndPotential:
    def test_prediction_loss_by_hand(self):
        design = np.array([[1.0, 0.0], [0.0, 2.0]])
        prob = RegressionProblem(design, np.zeros(2), 1.0, 0.1, 0.1)
        a = np.array([1.0, 1.0])
        b = np.array([0.0, 0.0])
        # (1/n)||X(a-b)||^2 = (1 + 4)/2
        assert prediction_loss(prob, a, b) == pytest.approx(2.5)

    def test_potential_by_hand(self):
        design = np.eye(2)
        y = np.array([1.0, -1.0])
        prob = RegressionProblem(design, y, 1.0, 0.5, 0.1)
        val = potential(prob, np.zeros(2))
        # (1/(2n))*||y||^2 = 0.5, penalty 0
        assert val == pytest.approx(0.5)
        val2 = potential(prob, np.array([1.0, -1.0]))
        assert val2 == pytest.approx(0.5 * 2)

    def test_ls_coefficients_orthonormal(self, orthonormal_problem):
        prob, _ = orthonormal_problem(n=12, p=3)
        np.testing.assert_allclose(
            ls_coefficients(prob), prob.xty, atol=1e-10)


class TestRngFor:
    def test_reproducible(self):
        a = rng_for(7, "branch", 3).standard_normal(5)
        b = rng_for(7, "branch", 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_branches_decorrelated(self):
        a = rng_for(7, "branch", 0).standard_normal(5)
        b = rng_for(7, "branch", 1).standard_normal(5)
        c = rng_for(7, "other", 0).standard_normal(5)
        assert not np.allclose(a, b)
        assert not np.allclose(a, c)

    def test_seed_matters(self):
        a = rng_for(1, "x").standard_normal(4)
        b = rng_for(2, "x").standard_normal(4)
        assert not np.allclose(a, b)


class TestReports:
    def test_pass_and_slack(self):
        rep = make_report(1.0, 2.0)
        assert rep.passed
        assert rep.slack == pytest.approx(1.0, abs=1e-8)

    def test_fail_when_lhs_exceeds_rhs_plus_tolerance(self):
        rep = make_report(2.0, 1.0, tolerance=0.5)
        assert not rep.passed
        rep2 = make_report(1.4, 1.0, tolerance=0.5)
        assert rep2.passed

    def test_context_recorded(self):
        rep = make_report(0.0, 1.0, check="demo", rep=3)
        assert rep.context["check"] == "demo"
        assert rep.context["rep"] == 3

    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6),
           st.floats(0, 1e3))
    @settings(max_examples=100, deadline=None)
    def test_passed_iff_within_tolerance(self, lhs, rhs, tol):
        rep = make_report(lhs, rhs, tolerance=tol)
        assert rep.passed == (lhs <= rhs + tol)


class TestSerialisation:
    def test_json_round_trip_exact(self, tmp_path, general_problem):
        prob, _ = general_problem()
        path = tmp_path / "prob.json"
        save_problem(prob, path)
        back = load_problem(path)
        np.testing.assert_array_equal(back.design, prob.design)
        np.testing.assert_array_equal(back.response, prob.response)
        assert back.sigma == prob.sigma
        assert back.lam == prob.lam
        assert back.tau == prob.tau

    def test_doc_shape(self, general_problem):
        prob, _ = general_problem()
        doc = problem_to_json(prob)
        assert set(doc) == {"design", "response", "sigma", "lambda", "tau"}
        again = problem_from_json(json.loads(json.dumps(doc)))
        np.testing.assert_array_equal(again.design, prob.design)

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError):
            load_problem(tmp_path / "absent.json")

    def test_csv_pair_loading(self, tmp_path, general_problem):
        prob, _ = general_problem(n=8, p=3)
        dpath = tmp_path / "design.csv"
        rpath = tmp_path / "response.csv"
        write_csv(dpath, [tuple(row) for row in prob.design])
        write_csv(rpath, [(v,) for v in prob.response])
        back = load_problem(dpath, format="csv-pair", response_path=rpath,
                            sigma=prob.sigma, lam=prob.lam, tau=prob.tau)
        np.testing.assert_array_equal(back.design, prob.design)
        np.testing.assert_array_equal(back.response, prob.response)

    def test_write_csv_deterministic_bytes(self, tmp_path):
        rows = [(1, 0.1 + 0.2), (2, 1.0 / 3.0)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(p1, rows, header=["i", "v"])
        write_csv(p2, rows, header=["i", "v"])
        assert p1.read_bytes() == p2.read_bytes()
        text = p1.read_text()
        # floats are written with repr round-trip fidelity
        assert "0.30000000000000004" in text

    def test_as_coefficients_validates_length(self):
        vec = as_coefficients([1.0, 2.0], 2)
        assert vec.shape == (2,)
        with pytest.raises(DataError):
            as_coefficients([1.0], 2)


class TestBoundReportDefaults:
    def test_default_tolerance_is_small(self):
        rep = make_report(1.0, 1.0)
        assert isinstance(rep, BoundReport)
        assert rep.passed
