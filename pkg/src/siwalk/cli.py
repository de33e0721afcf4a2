"""Command-line front end: compute, verify, and report.

Every subcommand loads a model config (JSON), computes one family of
quantities, and writes a canonical JSON report (optionally CSV) via an
atomic temp-file rename.  Reports are deterministic byte-for-byte for a
fixed config, seed, and tool version: timing information goes to stderr,
never into the report.

Exit codes: 0 success, 1 a verification check failed, 2 bad usage or
config, 3 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .enumeration import (BudgetExceededError, DEFAULT_BUDGET, exact_moments,
                          two_point_profile)
from .expansion import (DIRECT_M_CAP, k_grid, pi_direct_table,
                        pi_from_recurrence, verify_recurrence)
from .induction import (DEFAULT_DELTA, RatioTerms, assumption_audit,
                        extract_clt_terms, extract_lln_terms, sigma_sequence,
                        telescoping_check, theta_sequence)
from .models import ConfigError, load_model, model_dim
from .montecarlo import (McConfig, clt_diagnostic,
                         covariance_truncation_residual,
                         drift_truncation_residual, estimate,
                         standardized_wavevectors)
from .observables import (SpeedSeries, covariance_increment_check,
                          sigma_truncated, speed_identity_check,
                          theta_truncated)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3

DEFAULT_TOL = 1e-10


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SIWALK_WORKERS", "1")))
    except ValueError:
        return 1


def _jsonable(obj):
    """Recursively convert numpy and complex values to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":")) + "\n"


def atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _config_hash(model_path: str, extra: dict) -> str:
    with open(model_path, "rb") as fh:
        blob = fh.read()
    h = hashlib.sha256()
    h.update(blob)
    h.update(canonical_json(extra).encode())
    return h.hexdigest()


def _manifest(args, extra: dict) -> dict:
    return {
        "tool": "siwalk",
        "version": __version__,
        "model_config": os.path.basename(args.model),
        "config_hash": _config_hash(args.model, extra),
        "seed": getattr(args, "seed", None),
    }


def _emit(args, report: dict, csv_rows: list[str] | None = None) -> None:
    text = canonical_json(report)
    if args.out:
        atomic_write(args.out, text)
        if args.format == "csv" and csv_rows is not None:
            base, _ = os.path.splitext(args.out)
            atomic_write(base + ".csv", "\n".join(csv_rows) + "\n")
    else:
        sys.stdout.write(text)
        if args.format == "csv" and csv_rows is not None:
            sys.stdout.write("\n".join(csv_rows) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_enumerate(args) -> int:
    model = load_model(args.model)
    profile = two_point_profile(model, args.n, workers=args.workers)
    moments = exact_moments(model, args.n, workers=args.workers)
    report = {
        "quantity": "two-point-law",
        "manifest": _manifest(args, {"n": args.n}),
        "n": args.n,
        "field": profile[args.n].to_json_obj(),
        "per_step": [{"n": j,
                      "mean": moments[j][0],
                      "cov": moments[j][1]} for j in range(args.n + 1)],
    }
    _emit(args, report, profile[args.n].to_csv_rows())
    return EXIT_OK


def cmd_pi(args) -> int:
    model = load_model(args.model)
    table = pi_from_recurrence(model, args.m_max, workers=args.workers)
    per_m = []
    for m in table.lags():
        per_m.append({
            "m": m,
            "marginal": table.marginals[m].normalize().to_json_obj(),
            "first_moment": table.first_moment(m),
            "abs_mass": table.abs_pair_mass(m),
            "total_mass": table.marginal(m).moments()[0],
        })
    report = {
        "quantity": "expansion-coefficients",
        "manifest": _manifest(args, {"m_max": args.m_max}),
        "m_max": args.m_max,
        "per_m": per_m,
    }
    rows = ["m,abs_mass,total_mass"]
    for e in per_m:
        rows.append(f"{e['m']},{e['abs_mass']!r},{e['total_mass']!r}")
    _emit(args, report, rows)
    return EXIT_OK


def cmd_verify(args) -> int:
    model = load_model(args.model)
    d = model_dim(model)
    table = pi_from_recurrence(model, args.m_max, workers=args.workers)
    rec = verify_recurrence(model, table, args.n, grid=k_grid(d),
                            workers=args.workers)

    route_residual = None
    direct_checks = {}
    m_direct = min(args.m_max, DIRECT_M_CAP)
    if not args.skip_direct:
        direct = pi_direct_table(model, m_direct)
        worst = 0.0
        row_sums = 0.0
        for m in direct.lags():
            diff = (table.marginals[m] - direct.marginals[m]).max_abs()
            worst = max(worst, diff)
            row_sums = max(row_sums, direct.row_sum_max(m))
        route_residual = worst
        direct_checks = {
            "m_direct": m_direct,
            "route_agreement": worst,
            "max_row_sum": row_sums,
        }

    zero_mass = max(abs(table.marginal(m).moments()[0]) for m in table.lags())
    ok = (rec["max_x_residual"] <= args.tol
          and rec["max_k_residual"] <= args.tol
          and zero_mass <= args.tol
          and (route_residual is None or route_residual <= args.tol))
    report = {
        "quantity": "recurrence-residual",
        "manifest": _manifest(args, {"m_max": args.m_max, "n": args.n}),
        "tolerance": args.tol,
        "recurrence": rec,
        "coefficient_mass_max": zero_mass,
        "direct_route": direct_checks,
        "pass": ok,
    }
    rows = ["n,x_residual,k_residual"]
    for e in rec["per_n"]:
        rows.append(f"{e['n']},{e['x_residual']!r},{e['k_residual']!r}")
    _emit(args, report, rows)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_speed(args) -> int:
    model = load_model(args.model)
    table = pi_from_recurrence(model, args.m_max, workers=args.workers)
    series = SpeedSeries.from_table(model, table)
    check = speed_identity_check(model, table, args.n)
    ok = check["max_residual"] <= args.tol
    report = {
        "quantity": "speed-series",
        "manifest": _manifest(args, {"m_max": args.m_max, "n": args.n}),
        "tolerance": args.tol,
        "theta_null": series.theta_null,
        "per_m": [{"m": m, "a": series.a[m],
                   "theta": series.theta(m)} for m in sorted(series.a)],
        "identity": check,
        "pass": ok,
    }
    rows = ["m," + ",".join(f"theta{i+1}" for i in range(model_dim(model)))]
    for m in sorted(series.a):
        th = series.theta(m)
        rows.append(str(m) + "," + ",".join(repr(float(v)) for v in th))
    _emit(args, report, rows)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_variance(args) -> int:
    model = load_model(args.model)
    table = pi_from_recurrence(model, args.m_max, workers=args.workers)
    theta = theta_truncated(model, table, args.m_max)
    sigma = sigma_truncated(model, table, theta, args.m_max)
    check = covariance_increment_check(model, table, args.n)
    ok = check["max_residual"] <= args.tol
    report = {
        "quantity": "covariance-series",
        "manifest": _manifest(args, {"m_max": args.m_max, "n": args.n}),
        "tolerance": args.tol,
        "theta": theta,
        "sigma": sigma,
        "identity": check,
        "pass": ok,
    }
    _emit(args, report)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_induction(args) -> int:
    model = load_model(args.model)
    table = pi_from_recurrence(model, args.m_max, workers=args.workers)
    n_terms = min(args.n, args.m_max)
    terms = RatioTerms(model, table, n_terms, workers=args.workers)
    lln = extract_lln_terms(model, table, n_terms, delta=args.delta, terms=terms)
    clt = extract_clt_terms(model, table, n_terms, delta=args.delta, terms=terms)
    tele = telescoping_check(model, table, n_terms, delta=args.delta, terms=terms)
    audit = assumption_audit(table, model)
    ok = (lln["max_abs_e_at_zero"] <= args.tol
          and clt["max_grad_r_at_zero"] <= 1e-6
          and tele["max_residual"] <= 1e-9)
    report = {
        "quantity": "ratio-decomposition",
        "manifest": _manifest(args, {"m_max": args.m_max, "n": n_terms,
                                     "delta": args.delta}),
        "delta": args.delta,
        "theta_sequence": {str(j): v for j, v in
                           theta_sequence(model, table, n_terms).items()},
        "sigma_sequence": {str(j): v for j, v in
                           sigma_sequence(model, table, n_terms).items()},
        "drift_remainder": lln,
        "centered_remainder": clt,
        "telescoping": tele,
        "decay_audit": audit,
        "pass": ok,
    }
    _emit(args, report)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_mc(args) -> int:
    model = load_model(args.model)
    d = model_dim(model)
    table = pi_from_recurrence(model, args.m_max, workers=args.workers)
    theta = theta_truncated(model, table, args.m_max)
    sigma = sigma_truncated(model, table, theta, args.m_max)

    if args.k:
        base_ks = []
        for part in args.k.split(";"):
            kv = tuple(float(v) for v in part.split(","))
            if len(kv) != d:
                raise ConfigError(f"wavevector {part!r} needs {d} components")
            base_ks.append(kv)
    else:
        base_ks = [tuple(0.5 * v for v in row) for row in np.eye(d).tolist()]
        base_ks += [tuple(0.5 / np.sqrt(d) for _ in range(d)),
                    tuple(-0.25 for _ in range(d))]
    cfg = McConfig(n=args.n, samples=args.samples, seed=args.seed,
                   workers=args.workers, use_fast=args.fast,
                   cf_wavevectors=standardized_wavevectors(base_ks, args.n))
    est = estimate(model, cfg)
    drift_res = drift_truncation_residual(model, table, args.n)
    cov_res = covariance_truncation_residual(model, table, args.n)
    drift_dev = np.abs(est.mean / args.n - theta)
    drift_ok = bool(np.all(drift_dev <= 3.0 * est.se_mean / args.n + drift_res))
    cov_dev = np.abs(est.cov / args.n - sigma)
    cov_ok = bool(np.all(cov_dev <= 3.0 * est.se_cov / args.n + cov_res))
    diag = clt_diagnostic(est, theta, sigma, base_ks,
                          drift_residual=drift_res, cov_residual=cov_res)
    report = {
        "quantity": "endpoint-sample",
        "manifest": _manifest(args, {"n": args.n, "samples": args.samples,
                                     "m_max": args.m_max}),
        "estimate": est.to_json_obj(),
        "speed_reference": theta,
        "covariance_reference": sigma,
        "drift_truncation_residual": drift_res,
        "covariance_truncation_residual": cov_res,
        "drift_deviation": drift_dev,
        "drift_pass": drift_ok,
        "covariance_deviation": cov_dev,
        "covariance_pass": cov_ok,
        "clt_diagnostic": diag,
        "pass": drift_ok and cov_ok and diag["all_pass"],
    }
    rows = ["batch,running_mean_" + ",running_mean_".join(
        f"x{i+1}" for i in range(d))]
    run = np.cumsum(est.batch_means, axis=0) / np.arange(
        1, est.batch_means.shape[0] + 1)[:, None]
    for b in range(run.shape[0]):
        rows.append(str(b + 1) + "," + ",".join(repr(float(v)) for v in run[b]))
    _emit(args, report, rows)
    return EXIT_OK if report["pass"] else EXIT_CHECK_FAILED


def cmd_all(args) -> int:
    """Run the full battery at modest sizes and aggregate pass/fail."""
    rc = EXIT_OK
    results = {}
    for name, fn in [("verify", cmd_verify), ("speed", cmd_speed),
                     ("variance", cmd_variance), ("induction", cmd_induction)]:
        sub = argparse.Namespace(**vars(args))
        sub.out = None if args.out is None else f"{args.out}.{name}.json"
        code = fn(sub)
        results[name] = code
        rc = max(rc, code)
    sys.stderr.write("battery: " + " ".join(
        f"{k}={'ok' if v == 0 else 'FAIL'}" for k, v in results.items()) + "\n")
    return rc


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="siwalk",
        description="Exact expansion coefficients, drift/variance series, "
                    "and sampling checks for self-interacting lattice walks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, n_default=6, m_default=6):
        sp.add_argument("--model", required=True, help="model config JSON")
        sp.add_argument("--n", type=int, default=n_default,
                        help="number of walk steps")
        sp.add_argument("--m-max", dest="m_max", type=int, default=m_default,
                        help="largest coefficient lag")
        sp.add_argument("--workers", type=int, default=_default_workers(),
                        help="worker threads (default: SIWALK_WORKERS or 1)")
        sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
        sp.add_argument("--out", default=None, help="report path (JSON)")
        sp.add_argument("--format", choices=["json", "csv"], default="json",
                        help="also mirror tabular output as CSV")

    sp = sub.add_parser("enumerate", help="exact endpoint law by enumeration")
    common(sp)
    sp.set_defaults(fn=cmd_enumerate)

    sp = sub.add_parser("pi", help="expansion coefficients by recurrence inversion")
    common(sp)
    sp.set_defaults(fn=cmd_pi)

    sp = sub.add_parser("verify", help="recurrence + independent-route checks")
    common(sp)
    sp.add_argument("--skip-direct", action="store_true",
                    help="skip the nested-sum route (it is capped at lag "
                         f"{DIRECT_M_CAP} and slow)")
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("speed", help="drift series and the exact identity")
    common(sp)
    sp.set_defaults(fn=cmd_speed)

    sp = sub.add_parser("variance", help="covariance series and the exact identity")
    common(sp)
    sp.set_defaults(fn=cmd_variance)

    sp = sub.add_parser("induction", help="Fourier-ratio decomposition and decay audit")
    common(sp, n_default=8, m_default=8)
    sp.add_argument("--delta", type=float, default=DEFAULT_DELTA,
                    help="admissible-window scale")
    sp.set_defaults(fn=cmd_induction)

    sp = sub.add_parser("mc", help="Monte Carlo endpoint statistics")
    common(sp, n_default=500, m_default=8)
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--fast", choices=["auto", "never", "require"],
                    default="auto", help="compiled sampling path policy")
    sp.add_argument("--k", default=None,
                    help="CF wavevectors, e.g. '0.5,0;0,0.5' (semicolon-"
                         "separated vectors, comma-separated components)")
    sp.set_defaults(fn=cmd_mc)

    sp = sub.add_parser("all", help="verification battery at modest sizes")
    common(sp)
    sp.add_argument("--skip-direct", action="store_true")
    sp.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    sp.set_defaults(fn=cmd_all)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.monotonic()
    try:
        rc = args.fn(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        sys.stderr.write(f"budget error: {exc}\n")
        return EXIT_BUDGET
    sys.stderr.write(f"elapsed: {time.monotonic() - t0:.2f}s\n")
    return rc


if __name__ == "__main__":
    sys.exit(main())
