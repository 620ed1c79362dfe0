"""Timing comparison of the compiled and pure-NumPy compute kernels.

Runs the three hot kernels (coordinate-descent sweeps, the vector Langevin
chain and its matrix analogue) on identical seeded inputs under both
backends and prints a small table with the speedup.  Usage::

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from ewalasso import _kernels_py

try:
    from ewalasso import _kernels
except ImportError:
    _kernels = None


def _cd_case(rng, p=400, sweeps=200):
    x = rng.standard_normal((2 * p, p))
    gram = x.T @ x / (2 * p)
    xty = gram @ rng.standard_normal(p) * 0.5
    return {
        "gram": gram, "xty": xty, "lam": 0.1,
        "beta": np.zeros(p), "n_sweeps": sweeps,
    }


def run_cd(impl, case):
    beta = case["beta"].copy()
    impl.cd_sweeps(case["gram"], case["xty"], case["lam"], beta,
                   case["n_sweeps"])
    return beta


def _vector_case(rng, p=64, n_draws=4000, thinning=5, burn_in=2000):
    x = rng.standard_normal((2 * p, p))
    a = x.T @ x / (2 * p)
    b = a @ rng.standard_normal(p) * 0.5
    gamma = 2e-3
    steps = burn_in + n_draws * thinning
    return {
        "A": a, "b": b, "lam": 0.1, "tau": 0.05,
        "delta": gamma / 4.0, "gamma": gamma,
        "u": rng.standard_normal(p) * 0.1,
        "noise": rng.standard_normal((steps, p)),
        "n_draws": n_draws, "burn_in": burn_in, "thinning": thinning,
    }


def run_vector(impl, case):
    draws = np.empty((case["n_draws"], case["u"].size))
    u = case["u"].copy()
    status = impl.langevin_chain(
        case["A"], case["b"], case["lam"], case["tau"], case["delta"],
        case["gamma"], u, case["noise"], draws, case["burn_in"],
        case["thinning"])
    if status:
        raise RuntimeError("chain diverged")
    return draws


def _matrix_case(rng, m=8, n=200, n_draws=2000, thinning=5, burn_in=1000):
    p = m * m
    tensor = rng.standard_normal((n, p))
    a = tensor.T @ tensor / n
    b = a @ rng.standard_normal(p) * 0.5
    gamma = 2e-3
    steps = burn_in + n_draws * thinning
    case = _vector_case(rng, p=p)
    case.update(
        A=a, b=b, u=rng.standard_normal(p) * 0.1,
        noise=rng.standard_normal((steps, p)),
        n_draws=n_draws, burn_in=burn_in, thinning=thinning,
        m1=m, m2=m,
    )
    return case


def run_matrix(impl, case):
    draws = np.empty((case["n_draws"], case["u"].size))
    u = case["u"].copy()
    status = impl.matrix_langevin_chain(
        case["A"], case["b"], case["lam"], case["tau"], case["delta"],
        case["gamma"], u, case["noise"], draws, case["burn_in"],
        case["thinning"], case["m1"], case["m2"])
    if status:
        raise RuntimeError("chain diverged")
    return draws


def bench(fn, impl, case, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(impl, case)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timed repetitions per kernel; best is kept")
    args = parser.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; nothing to compare")
    rng = np.random.default_rng(0)
    cases = [
        ("cd_sweeps (p=400, 200 sweeps)", run_cd, _cd_case(rng)),
        ("langevin_chain (p=64, 22k steps)", run_vector, _vector_case(rng)),
        ("matrix_langevin_chain (8x8, 11k steps)", run_matrix,
         _matrix_case(rng)),
    ]
    print(f"{'kernel':<42}{'cython':>10}{'python':>10}{'speedup':>9}")
    for label, fn, case in cases:
        t_cy, out_cy = bench(fn, _kernels, case, args.repeat)
        t_py, out_py = bench(fn, _kernels_py, case, args.repeat)
        gap = float(np.max(np.abs(out_cy - out_py)))
        if gap > 1e-10:
            raise SystemExit(f"{label}: backends disagree by {gap:.2e}")
        print(f"{label:<42}{t_cy:>9.3f}s{t_py:>9.3f}s{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
