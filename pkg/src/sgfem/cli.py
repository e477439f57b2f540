"""Command-line entry point: ``sgfem {solve,table,diagnose}``.

Exit codes: 0 success, 2 a solve did not converge, 3 a diagnostic bound failed.
Argument errors exit with argparse's usual status 2 before any work is done.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import harness
from .krylov_precond import SOLVERS


def _common(p, multi=False):
    nargs = "+" if multi else None
    d = harness.ExperimentConfig()
    p.add_argument("--h-inv", type=int, nargs=nargs, default=None if multi else d.h_inverse, help="1/h, a power of two")
    p.add_argument("--p", type=int, nargs=nargs, default=None if multi else d.p, help="total polynomial degree")
    p.add_argument("--m", type=int, default=None if multi else d.m, help="number of KL terms")
    p.add_argument("--sigma", type=float, nargs=nargs, default=None if multi else d.sigma)
    p.add_argument("--corr-length", type=float, default=None if multi else d.corr_length)
    p.add_argument(
        "--solver", choices=SOLVERS, nargs=nargs, default=None if multi else d.solver
    )
    p.add_argument("--block-solve", choices=harness.BLOCK_SOLVES, default=None if multi else d.block_solve)
    p.add_argument("--tol", type=float, default=None if multi else d.tol)
    p.add_argument("--max-iter", type=int, default=None if multi else d.max_iter)
    p.add_argument("--restart", type=int, default=None if multi else d.restart)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", default=None, help="output path (JSON record, or CSV for tables)")


def build_parser():
    ap = argparse.ArgumentParser(prog="sgfem", description="Stochastic Galerkin block-preconditioner experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one configuration and write a JSON record")
    _common(s)
    s.add_argument("--history-csv", default=None, help="write the residual history (iter,relres)")

    t = sub.add_parser("table", help="sweep an experiment table")
    t.add_argument("table_id", choices=sorted(harness.TABLE_DEFAULTS))
    _common(t, multi=True)

    g = sub.add_parser("diagnose", help="dense spectral checks on a small configuration")
    _common(g)
    return ap


def _config(args):
    return harness.ExperimentConfig(
        h_inverse=args.h_inv, p=args.p, m=args.m, sigma=args.sigma, corr_length=args.corr_length,
        solver=args.solver, block_solve=args.block_solve, tol=args.tol, max_iter=args.max_iter,
        restart=args.restart, seed=args.seed, output_path=args.out,
    )


def _emit(record, path):
    if path:
        harness.write_record(record, path)
    else:
        json.dump(record, sys.stdout, indent=1)
        sys.stdout.write("\n")


def cmd_solve(args):
    cfg = _config(args)
    record, _, code = harness.run_experiment(cfg)
    _emit(record, args.out)
    if args.history_csv:
        harness.write_history_csv(record["report"]["residual_history"], args.history_csv)
    r = record["report"]
    print(f"{cfg.solver} {cfg.block_solve}: {r['status']} after {r['iterations']} iterations", file=sys.stderr)
    return code


def cmd_table(args):
    overrides = dict(
        h_inv=args.h_inv, p=args.p, m=args.m, sigma=args.sigma, solvers=args.solver,
        block_solve=args.block_solve, tol=args.tol, max_iter=args.max_iter, restart=args.restart,
        corr_length=args.corr_length,
    )

    def progress(c):
        print(f"h=1/{c.h_inv} p={c.p} m={c.m} sigma={c.sigma:g} {c.solver}: {c.status} {c.iterations}", file=sys.stderr)

    res = harness.run_table(args.table_id, overrides, progress=progress)
    text = res.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        stem = os.path.splitext(args.out)[0]
        harness.write_record(res.to_dict(), stem + ".json")
    else:
        sys.stdout.write(text)
    return harness.EXIT_OK if res.all_converged else harness.EXIT_NOT_CONVERGED


def cmd_diagnose(args):
    cfg = _config(args)
    record, code = harness.run_diagnostics(cfg)
    _emit(record, args.out)
    for name, chk in record["diagnostics"].items():
        print(f"{'PASS' if chk['passed'] else 'FAIL'} {name}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"solve": cmd_solve, "table": cmd_table, "diagnose": cmd_diagnose}[args.command](args)
    except ValueError as err:
        print(f"sgfem: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
