"""Compiled and pure-NumPy kernels must agree on identical inputs."""

import numpy as np
import pytest

from ewalasso import _kernels_py, backends
from ewalasso.model import rng_for

cython_kernels = pytest.importorskip(
    "ewalasso._kernels", reason="compiled extension not built")


def _chain_inputs(p, seed, n_draws=60, burn_in=40, thinning=3):
    rng = rng_for(seed, "backend-parity")
    a = rng.standard_normal((p, p))
    gram = a @ a.T / p + np.eye(p)
    xty = rng.standard_normal(p)
    gamma = 0.001
    u0 = rng.standard_normal(p)
    steps = burn_in + n_draws * thinning
    noise = rng.standard_normal((steps, p))
    return (gram, xty, 0.3, 0.05, gamma / 4, gamma, u0, noise,
            n_draws, burn_in, thinning)


def _run_chain(impl, inputs, m1=None, m2=None):
    gram, xty, lam, tau, delta, gamma, u0, noise, n_draws, burn, thin = inputs
    u = u0.copy()
    out = np.zeros((n_draws, u.size))
    if m1 is None:
        status = impl.langevin_chain(gram, xty, lam, tau, delta, gamma, u,
                                     noise, out, burn, thin)
    else:
        status = impl.matrix_langevin_chain(gram, xty, lam, tau, delta,
                                            gamma, u, noise, out, burn,
                                            thin, m1, m2)
    return out, u, status


class TestSelection:
    def test_active_backend_is_compiled(self):
        assert backends.BACKEND == "cython"
        assert backends.active_backend() == "cython"


class TestCoordinateDescentParity:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_sweeps_agree(self, seed):
        rng = rng_for(seed, "cd-parity")
        p = 7
        a = rng.standard_normal((p, p))
        gram = a @ a.T / p + 0.5 * np.eye(p)
        xty = rng.standard_normal(p)
        beta_c = np.zeros(p)
        beta_p = np.zeros(p)
        delta_c = cython_kernels.cd_sweeps(gram, xty, 0.2, beta_c, 25)
        delta_p = _kernels_py.cd_sweeps(gram, xty, 0.2, beta_p, 25)
        np.testing.assert_allclose(beta_c, beta_p, atol=1e-12)
        assert delta_c == pytest.approx(delta_p, abs=1e-12)


class TestLangevinParity:
    @pytest.mark.parametrize("seed", [3, 4])
    def test_vector_chain_agrees(self, seed):
        inputs = _chain_inputs(5, seed)
        out_c, u_c, status_c = _run_chain(cython_kernels, inputs)
        out_p, u_p, status_p = _run_chain(_kernels_py, inputs)
        assert status_c == status_p == 0
        np.testing.assert_allclose(out_c, out_p, atol=1e-12)
        np.testing.assert_allclose(u_c, u_p, atol=1e-12)

    def test_matrix_chain_agrees(self):
        inputs = _chain_inputs(6, seed=9)
        out_c, _, status_c = _run_chain(cython_kernels, inputs, m1=2, m2=3)
        out_p, _, status_p = _run_chain(_kernels_py, inputs, m1=2, m2=3)
        assert status_c == status_p == 0
        np.testing.assert_allclose(out_c, out_p, atol=1e-12)

    def test_square_matrix_chain_agrees(self):
        inputs = _chain_inputs(9, seed=10)
        out_c, _, _ = _run_chain(cython_kernels, inputs, m1=3, m2=3)
        out_p, _, _ = _run_chain(_kernels_py, inputs, m1=3, m2=3)
        np.testing.assert_allclose(out_c, out_p, atol=1e-12)


class TestPerBackendDeterminism:
    def test_each_backend_bitwise_repeatable(self):
        inputs = _chain_inputs(4, seed=12)
        for impl in (cython_kernels, _kernels_py):
            a, _, _ = _run_chain(impl, inputs)
            b, _, _ = _run_chain(impl, inputs)
            np.testing.assert_array_equal(a, b)
