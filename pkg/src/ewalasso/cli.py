"""Command-line surface: every estimation route behind one binary.

All subcommands share the seeding, output and error conventions: one root
``--seed`` drives every derived random stream, ``--out`` selects a file
(stdout otherwise), ``--format`` picks csv or json, and failures print a
machine-readable JSON object on stderr with exit code 1 (usage), 2 (bad
data) or 3 (numerical failure).  Identical argv produce byte-identical
output files.
"""

import argparse
import json
import sys

import numpy as np

from . import quadrature
from .compatibility import kappa_vector
from .experiments import (
    derive_seed,
    run_concentration_study,
    run_noise_event_study,
    run_oracle_check_matrix,
    run_oracle_check_vector,
    run_sure_study,
    spec_from_json,
)
from .lasso import duality_gap, fit_lasso, lasso_sure
from .model import (
    DataError,
    NumericalError,
    calibrate_lambda,
    load_problem,
    ls_coefficients,
    write_csv,
)
from .sampler import (
    SamplerConfig,
    default_config,
    ewa_from_samples,
    ewa_sure,
    h_sampled,
    sample_posterior,
)
from .shrinkage import ShrinkageInputs, default_z_grid, ewa_closed_form, h_curve
from .trace import (
    default_matrix_config,
    ewa_matrix,
    fit_nnp_ls,
    load_trace_problem,
    sample_matrix_posterior,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    """Bad flags or flag combinations."""


class _Parser(argparse.ArgumentParser):
    """argparse variant that raises instead of exiting on usage errors."""

    def error(self, message):
        raise UsageError(message)


def _common_flags(parser):
    parser.add_argument("--seed", type=int, default=0,
                        help="root seed for every derived random stream")
    parser.add_argument("--out", default=None,
                        help="output file (stdout when omitted)")
    parser.add_argument("--format", choices=("csv", "json"), default="json",
                        help="output serialisation")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress the human summary line")


def _problem_flags(parser):
    parser.add_argument("--input", default=None,
                        help="problem file (JSON interchange form)")
    parser.add_argument("--design-csv", default=None,
                        help="design CSV (alternative to --input JSON)")
    parser.add_argument("--response-csv", default=None,
                        help="response CSV accompanying --design-csv")
    parser.add_argument("--sigma", type=float, default=None)
    parser.add_argument("--lam", "--lambda", dest="lam", type=float,
                        default=None, help="l1 penalty override")
    parser.add_argument("--tau", type=float, default=None,
                        help="temperature override")


def _sampler_flags(parser):
    parser.add_argument("--samples", type=int, default=5000,
                        help="retained draws")
    parser.add_argument("--burn-in", type=int, default=None,
                        help="discarded steps (default 10x samples)")
    parser.add_argument("--thinning", type=int, default=5)
    parser.add_argument("--step", type=float, default=None,
                        help="Langevin step size (default gamma/4)")
    parser.add_argument("--gamma", type=float, default=None,
                        help="Moreau envelope parameter")


def _load_vector(args):
    if args.input is None and args.design_csv is None:
        raise UsageError("provide --input or --design-csv/--response-csv")
    if args.design_csv is not None:
        problem = load_problem(
            args.design_csv, format="csv-pair",
            response_path=args.response_csv, sigma=args.sigma,
            lam=args.lam, tau=args.tau,
        )
    else:
        problem = load_problem(args.input)
    overrides = {
        k: getattr(args, k)
        for k in ("sigma", "lam", "tau")
        if getattr(args, k) is not None
    }
    if overrides and args.design_csv is None:
        problem = problem.with_params(**overrides)
    return problem


def _build_config(problem, args, matrix=False):
    """Sampler configuration from flags; flag errors are usage errors."""
    base = default_matrix_config if matrix else default_config
    try:
        config = base(problem, n_samples=args.samples, seed=args.seed,
                      moreau_gamma=args.gamma)
        if args.step is not None or args.burn_in is not None or args.thinning != 5:
            config = SamplerConfig(
                step_size=(args.step if args.step is not None
                           else config.step_size),
                moreau_gamma=config.moreau_gamma,
                burn_in=(args.burn_in if args.burn_in is not None
                         else config.burn_in),
                n_samples=args.samples,
                thinning=args.thinning,
                seed=args.seed,
            )
    except DataError as exc:
        raise UsageError(str(exc)) from exc
    return config


def _emit(args, doc=None, rows=None, header=None):
    """Write the primary output: JSON document or CSV rows."""
    if args.format == "csv":
        if rows is None:
            raise UsageError("this subcommand has no CSV form")
        if args.out:
            write_csv(args.out, rows, header=header)
        else:
            if header is not None:
                print(",".join(header))
            for row in rows:
                print(",".join(
                    str(int(v)) if isinstance(v, (int, np.integer))
                    else (v if isinstance(v, str) else repr(float(v)))
                    for v in row
                ))
        return
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _note(args, message):
    if not args.quiet and args.out:
        print(message)


def _vec(arr):
    return [float(v) for v in np.asarray(arr, dtype=float).reshape(-1)]


def _mat(arr):
    return [[float(v) for v in row] for row in np.asarray(arr, dtype=float)]


# ---------------------------------------------------------------------------
# handlers

def _cmd_fit_lasso(args):
    problem = _load_vector(args)
    fit = fit_lasso(problem, tol=args.tol, max_iter=args.max_iter)
    doc = {
        "coefficients": _vec(fit.coefficients),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "duality_gap": duality_gap(problem, fit.coefficients),
    }
    rows = [(j, c) for j, c in enumerate(fit.coefficients)]
    _emit(args, doc, rows, header=["index", "coefficient"])
    _note(args, f"fit-lasso: wrote {args.out} "
          f"(converged={fit.converged}, sweeps={fit.iterations})")
    return EXIT_OK if fit.converged else EXIT_NUMERICAL


def _cmd_ewa_closed(args):
    problem = _load_vector(args)
    if not problem.is_orthonormal():
        raise DataError(
            "the closed form needs an orthonormal design (X'X/n = I); "
            "use ewa-sample or ewa-quadrature instead"
        )
    inputs = ShrinkageInputs(
        tau=problem.tau, lam=problem.lam,
        ls_coefficients=ls_coefficients(problem),
    )
    est = ewa_closed_form(inputs)
    var = np.diag(est.covariance)
    doc = {
        "mean": _vec(est.mean),
        "cov_diag": _vec(var),
        "h": est.h_value,
        "sure": ewa_sure(problem, est),
    }
    rows = [(j, m, v) for j, (m, v) in enumerate(zip(est.mean, var))]
    _emit(args, doc, rows, header=["index", "mean", "variance"])
    _note(args, f"ewa-closed: wrote {args.out} (h={est.h_value:.6g})")
    return EXIT_OK


def _cmd_ewa_sample(args):
    problem = _load_vector(args)
    config = _build_config(problem, args)
    samples = sample_posterior(problem, config)
    est = ewa_from_samples(samples)
    h_direct, h_se = h_sampled(problem, samples)
    var = np.diag(est.covariance)
    doc = {
        "mean": _vec(est.mean),
        "cov_diag": _vec(var),
        "h": est.h_value,
        "sure": ewa_sure(problem, est),
        "diagnostics": {
            "h_direct": h_direct,
            "h_mc_std_error": h_se,
            "mc_std_error": _vec(est.mc_std_error),
            "n_samples": config.n_samples,
            "burn_in": config.burn_in,
            "thinning": config.thinning,
            "step_size": config.step_size,
            "moreau_gamma": config.moreau_gamma,
            "seed": config.seed,
        },
    }
    rows = [
        (j, m, v, s)
        for j, (m, v, s) in enumerate(zip(est.mean, var, est.mc_std_error))
    ]
    _emit(args, doc, rows, header=["index", "mean", "variance",
                                   "mc_std_error"])
    _note(args, f"ewa-sample: wrote {args.out} (h={est.h_value:.6g})")
    return EXIT_OK


def _cmd_ewa_quadrature(args):
    problem = _load_vector(args)
    est = quadrature.oracle_moments(problem)
    var = np.diag(est.covariance)
    doc = {
        "mean": _vec(est.mean),
        "cov_diag": _vec(var),
        "h": est.h_value,
        "sure": ewa_sure(problem, est),
    }
    rows = [(j, m, v) for j, (m, v) in enumerate(zip(est.mean, var))]
    _emit(args, doc, rows, header=["index", "mean", "variance"])
    _note(args, f"ewa-quadrature: wrote {args.out} (h={est.h_value:.6g})")
    return EXIT_OK


def _cmd_sure(args):
    problem = _load_vector(args)
    route = args.route
    if route == "auto":
        route = "closed" if problem.is_orthonormal() else "sampler"
    if route == "closed":
        if not problem.is_orthonormal():
            raise DataError("closed route needs an orthonormal design")
        est = ewa_closed_form(ShrinkageInputs(
            tau=problem.tau, lam=problem.lam,
            ls_coefficients=ls_coefficients(problem),
        ))
    elif route == "quadrature":
        est = quadrature.oracle_moments(problem)
    else:
        config = _build_config(problem, args)
        est = ewa_from_samples(sample_posterior(problem, config))
    fit = fit_lasso(problem)
    doc = {
        "aggregate": ewa_sure(problem, est),
        "penalised_fit": lasso_sure(problem, fit),
        "route": route,
    }
    rows = [("aggregate", doc["aggregate"]),
            ("penalised_fit", doc["penalised_fit"])]
    _emit(args, doc, rows, header=["estimator", "sure"])
    _note(args, f"sure: wrote {args.out} (route={route})")
    return EXIT_OK


def _cmd_h_curve(args):
    rows = []
    for lb in args.lambda_bar:
        grid = default_z_grid(lb, points=args.points)
        values = h_curve(lb, grid)
        rows.extend((lb, z, h) for z, h in zip(grid, values))
    doc = [{"lambda_bar": lb, "z": z, "h": h} for lb, z, h in rows]
    _emit(args, doc, rows, header=["lambda_bar", "z", "h"])
    _note(args, f"h-curve: wrote {args.out} ({len(rows)} rows)")
    return EXIT_OK


def _cmd_kappa(args):
    problem = _load_vector(args)
    try:
        support = [int(tok) for tok in args.set.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"--set must be comma-separated integers: {exc}")
    mode = "exact" if args.mode == "exact" else "lower-bound-estimate"
    res = kappa_vector(problem.design, support, args.c, mode=mode,
                       n_directions=args.directions, seed=args.seed)
    doc = {
        "value": res.value,
        "mode": res.mode,
        "attained": res.attained,
        "witness": _vec(res.witness),
        "set": support,
        "c": args.c,
    }
    rows = [(j, w) for j, w in enumerate(res.witness)]
    _emit(args, doc, rows, header=["index", "witness"])
    _note(args, f"kappa: wrote {args.out} (value={res.value:.6g}, "
          f"mode={res.mode})")
    return EXIT_OK


def _cmd_fit_nnp(args):
    problem = load_trace_problem(args.input)
    est = fit_nnp_ls(problem, tol=args.tol, max_iter=args.max_iter)
    doc = {
        "matrix": _mat(est.matrix),
        "singular_values": _vec(est.singular_values),
        "iterations": est.iterations,
        "converged": est.converged,
    }
    rows = [
        (i, j, est.matrix[i, j])
        for i in range(est.matrix.shape[0])
        for j in range(est.matrix.shape[1])
    ]
    _emit(args, doc, rows, header=["row", "col", "value"])
    _note(args, f"fit-nnp: wrote {args.out} (rank={est.rank}, "
          f"converged={est.converged})")
    return EXIT_OK if est.converged else EXIT_NUMERICAL


def _cmd_ewa_matrix(args):
    problem = load_trace_problem(args.input)
    config = _build_config(problem, args, matrix=True)
    samples = sample_matrix_posterior(problem, config)
    est, info = ewa_matrix(samples)
    doc = {
        "matrix": _mat(est.matrix),
        "singular_values": _vec(est.singular_values),
        "h": info["h"],
        "h_identity": info["h_identity"],
        "spread": info["spread"],
        "spread_bound": info["spread_bound"],
        "diagnostics": {
            "h_mc_std_error": info["h_mc_std_error"],
            "n_samples": config.n_samples,
            "seed": config.seed,
        },
    }
    rows = [
        (i, j, est.matrix[i, j])
        for i in range(est.matrix.shape[0])
        for j in range(est.matrix.shape[1])
    ]
    _emit(args, doc, rows, header=["row", "col", "value"])
    _note(args, f"ewa-matrix: wrote {args.out} (h={info['h']:.6g})")
    return EXIT_OK


def _cmd_experiment(args):
    try:
        with open(args.spec) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {args.spec}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"could not parse spec {args.spec}: {exc}") from exc
    spec = spec_from_json(doc)
    if args.study == "oracle":
        if spec.scenario == "vector":
            result = run_oracle_check_vector(spec, n_samples=args.samples)
        else:
            result = run_oracle_check_matrix(spec, n_samples=args.samples)
    elif args.study == "concentration":
        result = run_concentration_study(spec, n_samples=args.samples)
    elif args.study == "noise-event":
        result = run_noise_event_study(spec)
    else:
        lam = calibrate_lambda(spec.sigma, spec.n, spec.p, spec.delta)
        result = run_sure_study(
            spec, lambda_grid=[0.5 * lam, lam, 2.0 * lam],
            tau_grid=[spec.tau()], n_samples=args.samples,
        )
    result.write_report_csv(args.report)
    result.write_summary_json(args.summary)
    failed = result.failed()
    if not args.quiet:
        print(
            f"experiment({args.study}): {len(result.reports)} reports, "
            f"{len(failed)} asserted failures -> {args.report}, {args.summary}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly

def build_parser():
    parser = _Parser(
        prog="ewalasso",
        description="Exponentially weighted aggregation with a Laplace "
                    "prior: fits, sampling, risk estimates and replication "
                    "studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text, *, problem=False, sampler=False,
            tol=None, default_format="json"):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _common_flags(p)
        p.set_defaults(format=default_format)
        if problem:
            _problem_flags(p)
        if sampler:
            _sampler_flags(p)
        if tol is not None:
            p.add_argument("--tol", type=float, default=tol)
            p.add_argument("--max-iter", type=int, default=20000)
        p.set_defaults(func=handler)
        return p

    add("fit-lasso", _cmd_fit_lasso,
        "penalised least squares by coordinate descent",
        problem=True, tol=1e-10)
    add("ewa-closed", _cmd_ewa_closed,
        "exact aggregate for orthonormal designs", problem=True)
    add("ewa-sample", _cmd_ewa_sample,
        "aggregate via proximal Langevin sampling",
        problem=True, sampler=True)
    add("ewa-quadrature", _cmd_ewa_quadrature,
        "aggregate via dense quadrature (p <= 3)", problem=True)
    psure = add("sure", _cmd_sure,
                "observable risk estimates of aggregate and fit",
                problem=True, sampler=True)
    psure.add_argument("--route", choices=("auto", "closed", "sampler",
                                           "quadrature"), default="auto")
    ph = add("h-curve", _cmd_h_curve,
             "temperature-free peakedness profile h(lambda_bar, z)",
             default_format="csv")
    ph.add_argument("--lambda-bar", type=float, nargs="+", required=True)
    ph.add_argument("--points", type=int, default=4000)
    pk = add("kappa", _cmd_kappa,
             "compatibility factor of the design", problem=True)
    pk.add_argument("--set", required=True,
                    help="comma-separated support indices")
    pk.add_argument("--c", type=float, default=3.0)
    pk.add_argument("--mode", choices=("exact", "estimate"), default="exact")
    pk.add_argument("--directions", type=int, default=100000)
    add("fit-nnp", _cmd_fit_nnp,
        "nuclear-norm penalised least squares", problem=True, tol=1e-12)
    add("ewa-matrix", _cmd_ewa_matrix,
        "matrix aggregate via Langevin sampling", problem=True, sampler=True)
    pe = add("experiment", _cmd_experiment,
             "replication study from a JSON spec")
    pe.add_argument("--spec", required=True)
    pe.add_argument("--study", choices=("oracle", "concentration",
                                        "noise-event", "sure"),
                    default="oracle")
    pe.add_argument("--report", default="report.csv")
    pe.add_argument("--summary", default="summary.json")
    pe.add_argument("--samples", type=int, default=2000)
    return parser


def _error_doc(kind, message):
    return json.dumps({"error": {"type": kind, "message": str(message)}},
                      sort_keys=True)


def dispatch(argv=None):
    """Parse argv, run the handler and map exceptions to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(_error_doc("usage", exc), file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(_error_doc("usage", exc), file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(_error_doc("data", exc), file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(_error_doc("numerical", exc), file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv=None):
    try:
        return dispatch(argv)
    except SystemExit as exc:  # argparse --help path
        return 0 if exc.code in (0, None) else exc.code


if __name__ == "__main__":
    sys.exit(main())
