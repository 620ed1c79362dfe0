"""Compatibility factor of a design: exact enumeration and random search."""

import numpy as np
import pytest

from ewalasso.compatibility import (
    kappa_matrix,
    kappa_vector,
    matrix_ratio,
    reduction_projectors,
    vector_ratio,
)
from ewalasso.model import DataError, rng_for


def _orthonormal(n, p, seed):
    rng = rng_for(seed, "kappa-orth")
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q[:, :p] * np.sqrt(n)


def _general(n, p, seed):
    rng = rng_for(seed, "kappa-gen")
    design = rng.standard_normal((n, p))
    return design / np.sqrt(np.max(np.sum(design * design, axis=0)) / n)


class TestExactMode:
    @pytest.mark.parametrize("size", [1, 2, 4])
    @pytest.mark.parametrize("c", [1.0, 3.0])
    def test_orthonormal_designs_give_one(self, size, c):
        design = _orthonormal(12, 6, seed=size)
        result = kappa_vector(design, list(range(size)), c)
        assert result.mode == "exact"
        assert result.value == pytest.approx(1.0, abs=1e-6)

    def test_witness_reproduces_value(self):
        design = _general(10, 4, seed=5)
        J = [0, 2]
        result = kappa_vector(design, J, 3.0)
        assert vector_ratio(design, J, 3.0, result.witness) == (
            pytest.approx(result.value, rel=1e-9))

    def test_duplicated_columns(self):
        base = rng_for(1, "dup").standard_normal(6)
        base = base / np.sqrt(base @ base / 6)
        design = np.column_stack([base, base])
        tight = kappa_vector(design, [0], 1.0)
        assert tight.value == pytest.approx(1.0, abs=1e-6)
        slack = kappa_vector(design, [0], 3.0)
        assert slack.value == pytest.approx(0.0, abs=1e-6)

    def test_scale_quadratically(self):
        design = _general(10, 3, seed=2)
        a = kappa_vector(design, [0], 3.0)
        b = kappa_vector(2.0 * design, [0], 3.0)
        assert b.value == pytest.approx(4.0 * a.value, rel=1e-8)

    def test_nonincreasing_in_c(self):
        design = _general(12, 4, seed=7)
        values = [kappa_vector(design, [0, 1], c).value
                  for c in (1.0, 2.0, 3.0, 5.0)]
        assert np.all(np.diff(values) <= 1e-10)

    def test_dimension_cap(self):
        design = _general(20, 14, seed=0)
        with pytest.raises(DataError):
            kappa_vector(design, [0], 3.0, mode="exact")

    def test_bad_support_rejected(self):
        design = _general(8, 3, seed=0)
        with pytest.raises(DataError):
            kappa_vector(design, [5], 3.0)
        with pytest.raises(DataError):
            kappa_vector(design, [], 3.0)


class TestEstimateMode:
    def test_close_to_exact_on_small_designs(self):
        for seed in range(3):
            design = _general(9, 3, seed=seed)
            exact = kappa_vector(design, [0], 3.0, mode="exact")
            approx = kappa_vector(design, [0], 3.0,
                                  mode="lower-bound-estimate",
                                  n_directions=40000, seed=seed)
            assert approx.mode == "lower-bound-estimate"
            rel = abs(approx.value - exact.value) / max(exact.value, 1e-12)
            assert rel <= 1e-3

    def test_never_below_exact_minimum(self):
        # the random search reports the ratio at its best witness, which can
        # only sit at or above the true infimum
        design = _general(9, 3, seed=11)
        exact = kappa_vector(design, [0, 1], 3.0, mode="exact")
        approx = kappa_vector(design, [0, 1], 3.0,
                              mode="lower-bound-estimate",
                              n_directions=20000, seed=1)
        assert approx.value >= exact.value - 1e-9

    def test_deterministic_given_seed(self):
        design = _general(9, 3, seed=4)
        a = kappa_vector(design, [0], 3.0, mode="lower-bound-estimate",
                         n_directions=5000, seed=7)
        b = kappa_vector(design, [0], 3.0, mode="lower-bound-estimate",
                         n_directions=5000, seed=7)
        assert a.value == b.value


class TestVectorRatio:
    def test_outside_cone_is_infinite(self):
        design = _general(8, 3, seed=3)
        u = np.array([0.1, 5.0, 5.0])  # off-support mass dominates
        assert vector_ratio(design, [0], 1.0, u) == np.inf

    def test_inside_cone_matches_formula(self):
        design = _general(8, 3, seed=3)
        u = np.array([1.0, 0.1, -0.1])
        c, J = 2.0, [0]
        margin = c * 1.0 - 0.2
        n = design.shape[0]
        expect = (c ** 2 * 1 * np.sum((design @ u) ** 2) / n) / margin ** 2
        assert vector_ratio(design, J, c, u) == pytest.approx(expect,
                                                              rel=1e-12)


class TestReductionProjectors:
    def test_complementary_split(self):
        rng = rng_for(0, "proj")
        b_bar = np.outer(rng.standard_normal(5), rng.standard_normal(4))
        keep, complement = reduction_projectors(b_bar, [0])
        u = rng.standard_normal((5, 4))
        np.testing.assert_allclose(keep(u) + complement(u), u, atol=1e-12)

    def test_idempotent(self):
        rng = rng_for(1, "proj")
        b_bar = (np.outer(rng.standard_normal(5), rng.standard_normal(4))
                 + np.outer(rng.standard_normal(5), rng.standard_normal(4)))
        keep, complement = reduction_projectors(b_bar, [0, 1])
        u = rng.standard_normal((5, 4))
        np.testing.assert_allclose(keep(keep(u)), keep(u), atol=1e-12)
        np.testing.assert_allclose(complement(complement(u)),
                                   complement(u), atol=1e-12)

    def test_complement_rank_bounded(self):
        rng = rng_for(2, "proj")
        b_bar = sum(np.outer(rng.standard_normal(6), rng.standard_normal(6))
                    for _ in range(3))
        J = [0]
        _, complement = reduction_projectors(b_bar, J)
        u = rng.standard_normal((6, 6))
        rank = np.linalg.matrix_rank(complement(u), tol=1e-10)
        assert rank <= 2 * len(J)


class TestMatrixKappa:
    def test_entry_sampling_attains_half(self):
        # analytic floor: the nuclear/Frobenius inequality saturates at
        # rank 2|J|, giving ratio 1/2 for designs whose prediction norm
        # equals the Frobenius norm
        rng = rng_for(3, "mk")
        m = 4
        tensor = np.zeros((m * m, m, m))
        for k in range(m * m):
            tensor[k, k // m, k % m] = np.sqrt(m * m)
        b_bar = np.outer(rng.standard_normal(m), rng.standard_normal(m))
        result = kappa_matrix(tensor, b_bar, [0], 3.0, budget=40000, seed=0)
        assert result.mode == "lower-bound-estimate"
        assert result.value == pytest.approx(0.5, abs=5e-3)

    def test_witness_reproduces_value(self):
        rng = rng_for(4, "mk")
        tensor = rng.standard_normal((30, 3, 3))
        b_bar = np.outer(rng.standard_normal(3), rng.standard_normal(3))
        result = kappa_matrix(tensor, b_bar, [0], 3.0, budget=10000, seed=2)
        again = matrix_ratio(tensor, b_bar, [0], 3.0, result.witness)
        assert again == pytest.approx(result.value, rel=1e-9)

    def test_deterministic(self):
        rng = rng_for(5, "mk")
        tensor = rng.standard_normal((25, 3, 3))
        b_bar = np.outer(rng.standard_normal(3), rng.standard_normal(3))
        a = kappa_matrix(tensor, b_bar, [0], 3.0, budget=5000, seed=9)
        b = kappa_matrix(tensor, b_bar, [0], 3.0, budget=5000, seed=9)
        assert a.value == b.value
