"""Command-line interface: ``mwlasso fit | simulate | replicate-table1``."""
from __future__ import annotations

import argparse
import json
import sys
import warnings

from . import __version__
from .data import ColumnSchema, from_csv, to_csv
from .errors import DegenerateTreatmentError, InputError
from .lasso import DEFAULT_PENALTY_C, compute_penalty
from .pds import PdsConfig, fit_pds
from .simulation import (
    SCHEMA_VERSION,
    TABLE_HEADER,
    DgpConfig,
    default_threads,
    generate,
    rep_seed,
    replicate_table1,
    run_mc,
    table1_delta,
)
from .variance import Flavor, all_reports

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3

EPILOG = """exit codes:
  0  success (including fits whose variance estimate is not positive: "no_ci": true)
  2  usage, schema or parse error
  3  degenerate treatment (no variation left after selection)
"""

_VARIANCE_CHOICES = {
    "2way": (Flavor.TWO_WAY,),
    "1way1": (Flavor.ONE_WAY_DIM1,),
    "1way2": (Flavor.ONE_WAY_DIM2,),
    "0way": (Flavor.ZERO_WAY,),
    "all": tuple(Flavor),
}


def _pair(text):
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return a, b


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_solver_flags(p):
    p.add_argument("--penalty-c", type=float, default=DEFAULT_PENALTY_C,
                   help="constant C > 1 in the plug-in penalty (default %(default)s)")
    p.add_argument("--level", type=float, default=0.05,
                   help="1 - confidence level (default %(default)s)")
    p.add_argument("--residuals", choices=("lasso", "post"), default="lasso",
                   help="residuals used for the variance (default %(default)s)")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-sweeps", type=int, default=10_000)
    p.add_argument("--no-standardize", action="store_true",
                   help="solve the lasso on the raw column scale")


def _pds_config(args) -> PdsConfig:
    compute_penalty(2, 2, 1, args.penalty_c)  # validates C > 1 up front
    return PdsConfig(
        c=args.penalty_c,
        tol=args.tol,
        max_sweeps=args.max_sweeps,
        standardize=not args.no_standardize,
        residuals=args.residuals,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mwlasso",
        description="Post-double-selection lasso with two-way cluster-robust inference.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="estimate the treatment effect from a CSV file",
                         epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    fit.add_argument("--data", required=True, help="CSV file with a header row")
    fit.add_argument("--y-col", required=True)
    fit.add_argument("--d-col", required=True)
    fit.add_argument("--cluster1-col", required=True)
    fit.add_argument("--cluster2-col", required=True)
    fit.add_argument("--x-cols", type=_csv_list, default=None,
                     help="comma-separated covariates (default: all other numeric columns)")
    fit.add_argument("--variance", choices=tuple(_VARIANCE_CHOICES), default="all")
    _add_solver_flags(fit)

    sim = sub.add_parser("simulate", help="Monte Carlo study of the estimator",
                         epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sim.add_argument("--n1", type=int, required=True)
    sim.add_argument("--n2", type=int, required=True)
    sim.add_argument("--dim", type=int, required=True,
                     help="number of regressors including the treatment")
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--omega-x", type=_pair, default=(0.25, 0.25))
    sim.add_argument("--omega-e", type=_pair, default=(0.25, 0.25))
    sim.add_argument("--rho", type=float, default=0.5)
    sim.add_argument("--table", action="store_true",
                     help="print an aligned text row instead of JSON")
    sim.add_argument("--emit-csv", metavar="PATH",
                     help="also write the dataset of replication 0 as CSV")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: $MWLASSO_THREADS or CPU count)")
    _add_solver_flags(sim)

    rep = sub.add_parser("replicate-table1", help="re-run rows of the published table",
                         epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    rep.add_argument("--reps", type=int, default=2000)
    rep.add_argument("--rows", type=_csv_list, default=None,
                     help="comma-separated NxMxDim selectors, e.g. 40x40x100 (default: all 15)")
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--table", action="store_true",
                     help="print an aligned text table instead of JSON")
    rep.add_argument("--threads", type=int, default=None)
    _add_solver_flags(rep)
    return parser


def _emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")


def cmd_fit(args) -> int:
    schema = ColumnSchema(args.y_col, args.d_col, args.cluster1_col, args.cluster2_col,
                          args.x_cols)
    cfg = _pds_config(args)
    ds = from_csv(args.data, schema)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit_pds(ds, cfg)
        reports = all_reports(ds, res.alpha_tilde, res.v_hat, res.eps_hat, args.level,
                              _VARIANCE_CHOICES[args.variance])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    fit_y, fit_d = res.stage1_fits
    out = {
        "schema": SCHEMA_VERSION,
        "kind": "fit",
        "alpha_tilde": res.alpha_tilde,
        "alpha_hat": res.alpha_hat,
        "n_obs": ds.n_obs,
        "n1": ds.n1,
        "n2": ds.n2,
        "p": ds.p,
        "penalty": res.lam,
        "support": {
            "indices": [int(k) for k in res.support_union],
            "names": [ds.x_names[k] for k in res.support_union],
        },
        "variance": {fl.value: r.to_dict() for fl, r in reports.items()},
        "no_ci": any(r.no_ci for r in reports.values()),
        "solver": {
            name: {
                "sweeps_used": f.sweeps_used,
                "converged": f.converged,
                "final_delta": f.final_delta,
                "support": [int(k) for k in f.support],
            }
            for name, f in (("outcome", fit_y), ("treatment", fit_d))
        },
        "rank_deficient": res.rank_deficient,
    }
    _emit(out)
    return EXIT_OK


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_threads()


def cmd_simulate(args) -> int:
    cfg = DgpConfig(args.n1, args.n2, args.dim, args.omega_x, args.omega_e, args.rho, args.seed)
    pds_cfg = _pds_config(args)
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    if args.emit_csv:
        first = DgpConfig(cfg.n1, cfg.n2, cfg.dim, cfg.omega_x, cfg.omega_e, cfg.rho,
                          rep_seed(cfg.seed, 0))
        to_csv(generate(first), args.emit_csv)
    summary = run_mc(cfg, args.reps, pds_cfg, args.level, _threads(args))
    if args.table:
        print(TABLE_HEADER)
        print(summary.table_row())
    else:
        _emit(summary.to_dict())
    return EXIT_OK


def cmd_replicate(args) -> int:
    pds_cfg = _pds_config(args)
    results = replicate_table1(args.reps, args.rows, args.seed, pds_cfg, args.level,
                               _threads(args))
    if args.table:
        print(TABLE_HEADER + "   dAvg    dSD  d0Way  d1Way  d2Way")
        for item in results:
            delta = table1_delta(item["summary"], item["published"])
            print(
                item["summary"].table_row()
                + f"  {delta['avg']:+6.3f} {delta['sd']:+6.3f} {delta['cov_0way']:+6.3f}"
                + f" {delta['cov_1way']:+6.3f} {delta['cov_2way']:+6.3f}"
            )
        return EXIT_OK
    rows = []
    for item in results:
        rows.append(
            {
                "summary": item["summary"].to_dict(),
                "published": item["published"],
                "delta": table1_delta(item["summary"], item["published"]),
            }
        )
    _emit({"schema": SCHEMA_VERSION, "kind": "table1", "reps": args.reps,
           "seed": args.seed, "rows": rows})
    return EXIT_OK


_COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "replicate-table1": cmd_replicate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DegenerateTreatmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
