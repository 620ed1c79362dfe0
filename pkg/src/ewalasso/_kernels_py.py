"""Pure-NumPy kernels: reference twin of the compiled extension.

Same call signatures and iteration order as ``_kernels.pyx`` so either
backend can serve the solvers and samplers; the compiled version is selected
at import when available (see ``backends``).
"""

import numpy as np


def soft(x, threshold):
    """Coordinatewise soft threshold; value exactly at the threshold maps to 0."""
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def cd_sweeps(gram, xty, lam, beta, n_sweeps):
    """Run ``n_sweeps`` cyclic coordinate-descent sweeps on ``beta`` in place.

    ``gram`` is X^T X / n and ``xty`` is X^T y / n; the sweep minimises
    (1/2n)||y - X beta||^2 + lam ||beta||_1 one coordinate at a time with the
    gradient kept incrementally up to date.  Returns the largest absolute
    coefficient change seen in the final sweep.
    """
    p = beta.shape[0]
    g = xty - gram @ beta
    delta_max = 0.0
    for _ in range(n_sweeps):
        delta_max = 0.0
        for j in range(p):
            gjj = gram[j, j]
            old = beta[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                z = g[j] + gjj * old
                new = soft(z, lam) / gjj
            change = new - old
            if change != 0.0:
                g -= gram[:, j] * change
                beta[j] = new
                ac = abs(change)
                if ac > delta_max:
                    delta_max = ac
    return float(delta_max)


def _chain(A, b, lam, tau, delta, gamma, u, noise, draws, burn_in, thinning, prox):
    keep = 1.0 - delta / gamma
    pull = delta / gamma
    threshold = gamma * lam / tau
    step_over_tau = delta / tau
    amp = np.sqrt(2.0 * delta)
    total = burn_in + draws.shape[0] * thinning
    k = 0
    for t in range(total):
        drift = keep * u + pull * prox(u, threshold) - step_over_tau * (A @ u - b)
        u[:] = drift + amp * noise[t]
        if not np.all(np.isfinite(u)):
            return 1
        if t >= burn_in and (t - burn_in) % thinning == thinning - 1:
            draws[k] = u
            k += 1
    return 0


def langevin_chain(A, b, lam, tau, delta, gamma, u, noise, draws, burn_in, thinning):
    """Unadjusted proximal Langevin chain targeting exp(-V(u)/tau), l1 penalty.

    One step:  u <- (1 - d/g) u + (d/g) soft(u, g lam / tau)
                    - (d/tau) (A u - b) + sqrt(2 d) z_t
    with d = ``delta`` (step size), g = ``gamma`` (envelope smoothing), A the
    Gram matrix, b = X^T y / n and z_t the pre-generated standard-normal row
    ``noise[t]``.  Every ``thinning``-th state after ``burn_in`` steps is
    stored in ``draws``.  Returns 0, or 1 on a non-finite iterate (abort).
    """
    return _chain(A, b, lam, tau, delta, gamma, u, noise, draws, burn_in,
                  thinning, soft)


def svt(flat, m1, m2, threshold):
    """Singular-value soft threshold of ``flat`` reshaped to (m1, m2)."""
    mat = flat.reshape(m1, m2)
    left, sing, right_t = np.linalg.svd(mat, full_matrices=False)
    kept = np.maximum(sing - threshold, 0.0)
    return ((left * kept) @ right_t).reshape(-1)


def matrix_langevin_chain(A, b, lam, tau, delta, gamma, u, noise, draws,
                          burn_in, thinning, m1, m2):
    """Proximal Langevin chain on vectorised matrices, nuclear-norm penalty.

    Identical stepping rule to :func:`langevin_chain`; the only difference is
    the proximal map, which soft-thresholds singular values instead of
    coordinates.
    """
    def prox(vec, threshold):
        return svt(vec, m1, m2, threshold)

    return _chain(A, b, lam, tau, delta, gamma, u, noise, draws, burn_in,
                  thinning, prox)
