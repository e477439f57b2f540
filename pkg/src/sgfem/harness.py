"""Experiment driver: configuration, single solves, table sweeps and diagnostics.

A run record is a JSON-ready dict::

    {"schema": 1, "config": {...}, "problem": {...}, "report": {...},
     "statistics": {"mean": [...], "variance": [...]}}

Fields are stored on the interior nodes in the mesh's row-major order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

import numpy as np

from . import diagnostics as dg
from .gpc_basis import build_multi_index_set
from .krylov_precond import SOLVERS, BlockSolverMode, BreakdownError, SolveReport, solve
from .mesh_fem import build_mesh, is_power_of_two, model_rhs
from .random_field import build_kl_2d
from .sg_system import MAX_EXPLICIT_SIZE, assemble_explicit, build_rhs, build_sg_operator

log = logging.getLogger(__name__)

SCHEMA = 1
BLOCK_SOLVES = ("exact", "mg-v22")

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_BOUND_VIOLATED = 3


@dataclass(frozen=True)
class ExperimentConfig:
    h_inverse: int = 32
    p: int = 3
    m: int = 4
    sigma: float = 0.1
    corr_length: float = 1.0
    solver: str = "bd-pcg"
    block_solve: str = "mg-v22"
    tol: float = 1e-10
    max_iter: int = 1000
    restart: int = 10
    seed: int = 0
    output_path: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (isinstance(self.h_inverse, int) and is_power_of_two(self.h_inverse) and self.h_inverse >= 2):
            raise ValueError(f"h_inverse must be a power of two >= 2, got {self.h_inverse!r}")
        if not 1 <= self.p <= 10:
            raise ValueError(f"p must be in [1, 10], got {self.p}")
        if not 1 <= self.m <= 64:
            raise ValueError(f"m must be in [1, 64], got {self.m}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not self.corr_length > 0:
            raise ValueError(f"corr_length must be positive, got {self.corr_length}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.block_solve not in BLOCK_SOLVES:
            raise ValueError(f"block_solve must be one of {BLOCK_SOLVES}, got {self.block_solve!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0 or self.restart < 1:
            raise ValueError("max_iter must be >= 0 and restart >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @property
    def problem_key(self):
        return (self.h_inverse, self.p, self.m, self.sigma, self.corr_length)


@dataclass
class Problem:
    mesh: Any
    kl: Any
    mis: Any
    op: Any
    b: np.ndarray


def build_problem(config: ExperimentConfig, mean: float = 1.0) -> Problem:
    """Mesh, KL expansion, chaos basis, Galerkin operator and load vector."""
    mesh = build_mesh(config.h_inverse)
    kl = build_kl_2d(mean, config.sigma, config.corr_length, config.m)
    mis = build_multi_index_set(config.m, config.p)
    op = build_sg_operator(mesh, kl, mis)
    b = build_rhs(mesh, mis, model_rhs)
    return Problem(mesh, kl, mis, op, b)


def solution_statistics(op, x):
    """Mean field (coefficient of the constant mode) and variance field."""
    U = op.chunks(x)
    mean = U[0]
    var = np.sum(U[1:] ** 2, axis=0) if op.n_xi > 1 else np.zeros_like(mean)
    return {
        "mean": mean.tolist(),
        "variance": var.tolist(),
        "mean_max": float(np.max(mean)),
        "variance_max": float(np.max(var)),
    }


def _problem_info(problem):
    op = problem.op
    return {
        "N": int(op.shape[0]),
        "N_x": int(op.n_x),
        "N_xi": int(op.n_xi),
        "captured_variance_fraction": float(problem.kl.captured_variance_fraction()),
        "coefficient_bounds": list(problem.kl.coefficient_bounds()),
    }


def run_experiment(config: ExperimentConfig, problem: Problem | None = None):
    """Solve one configuration.  Returns ``(record, x, exit_code)``."""
    if problem is None:
        problem = build_problem(config)
    mode = BlockSolverMode.parse(config.block_solve)
    error = None
    try:
        x, rep = solve(
            problem.op, config.solver, mode, problem.b, config.tol, config.max_iter, config.restart
        )
    except BreakdownError as err:
        log.warning("solver breakdown: %s", err)
        x = np.zeros_like(problem.b)
        rep = SolveReport(iterations=err.iteration, status="breakdown")
        error = str(err)
    report = rep.to_dict()
    if error is not None:
        report["error"] = error
    record = {
        "schema": SCHEMA,
        "config": config.to_dict(),
        "problem": _problem_info(problem),
        "report": report,
        "statistics": solution_statistics(problem.op, x),
    }
    code = EXIT_OK if rep.converged else EXIT_NOT_CONVERGED
    return record, x, code


def report_from_record(record):
    """Parse a record back into its config; checks the schema version."""
    if record.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {record.get('schema')!r}")
    return ExperimentConfig.from_dict(record["config"])


def write_record(record, path):
    with open(path, "w") as fh:
        json.dump(record, fh, indent=1)
        fh.write("\n")


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "relres"])
        for i, r in enumerate(history):
            w.writerow([i, repr(float(r))])


# ---------------------------------------------------------------- tables

TABLE2_REFERENCE = {"bd-pcg": 13, "bt-gpcg": 9, "bs-pcg": 9, "bt-gmres": 8}
TABLE3_REFERENCE = {
    "bgs": (13, 16, 24, 65),
    "bd-pcg": (13, 18, 27, 49),
    "bt-gpcg": (9, 10, 13, 22),
    "bt-gmres": (8, 9, 12, 20),
    "bs-pcg": (9, 10, 12, 20),
}
TABLE3_SIGMAS = (0.1, 0.2, 0.3, 0.4)

TABLE_DEFAULTS = {
    "table2": dict(h_inv=[32, 64, 128], p=[2, 3, 4], m=4, sigma=[0.1], solvers=["bd-pcg", "bt-gpcg", "bs-pcg", "bt-gmres"], block_solve="mg-v22"),
    "table3": dict(h_inv=[64], p=[4], m=6, sigma=list(TABLE3_SIGMAS), solvers=list(SOLVERS), block_solve="mg-v22"),
    "fig2_sweep": dict(h_inv=[64], p=[4], m=6, sigma=list(TABLE3_SIGMAS), solvers=list(SOLVERS), block_solve="exact"),
}


@dataclass
class Cell:
    h_inv: int
    p: int
    m: int
    sigma: float
    solver: str
    block_solve: str
    iterations: int | None
    converged: bool
    status: str
    wall_time: float | None
    reference: int | None = None


@dataclass
class TableResult:
    table_id: str
    settings: dict
    cells: list

    def lookup(self, **kw):
        out = [c for c in self.cells if all(getattr(c, k) == v for k, v in kw.items())]
        if len(out) != 1:
            raise KeyError(f"{len(out)} cells match {kw}")
        return out[0]

    @property
    def all_converged(self):
        return all(c.converged for c in self.cells)

    def to_dict(self):
        return {"schema": SCHEMA, "table": self.table_id, "settings": self.settings, "cells": [asdict(c) for c in self.cells]}

    def to_csv(self):
        return _table_csv(self)


def _reference(table_id, solver, sigma, h_inv, p, m):
    if table_id == "table2" and math.isclose(sigma, 0.1) and m in (4, 6):
        return TABLE2_REFERENCE.get(solver)
    if table_id == "table3" and (h_inv, p, m) == (64, 4, 6):
        for s, ref in zip(TABLE3_SIGMAS, TABLE3_REFERENCE.get(solver, ())):
            if math.isclose(sigma, s):
                return ref
    return None


def table_settings(table_id, overrides=None):
    if table_id not in TABLE_DEFAULTS:
        raise ValueError(f"unknown table {table_id!r}; expected one of {sorted(TABLE_DEFAULTS)}")
    s = dict(TABLE_DEFAULTS[table_id])
    s.update(tol=1e-10, max_iter=1000, restart=10, corr_length=1.0)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in s:
            raise ValueError(f"unknown override {k!r}")
        s[k] = v
    for k in ("h_inv", "p", "sigma", "solvers"):
        if not isinstance(s[k], (list, tuple)):
            s[k] = [s[k]]
        s[k] = list(s[k])
    return s


def run_table(table_id, overrides=None, progress=None):
    """Sweep a table's parameter grid; failures are recorded per cell."""
    s = table_settings(table_id, overrides)
    cells = []
    for h_inv in s["h_inv"]:
        for p in s["p"]:
            for sigma in s["sigma"]:
                problem = None
                build_error = None
                for solver in s["solvers"]:
                    ref = _reference(table_id, solver, sigma, h_inv, p, s["m"])
                    try:
                        cfg = ExperimentConfig(
                            h_inverse=h_inv, p=p, m=s["m"], sigma=sigma, corr_length=s["corr_length"],
                            solver=solver, block_solve=s["block_solve"], tol=s["tol"],
                            max_iter=s["max_iter"], restart=s["restart"],
                        )
                        if problem is None and build_error is None:
                            try:
                                problem = build_problem(cfg)
                            except (ValueError, MemoryError) as err:
                                build_error = err
                        if build_error is not None:
                            raise build_error
                        rec, _, _ = run_experiment(cfg, problem)
                        r = rec["report"]
                        cell = Cell(h_inv, p, s["m"], sigma, solver, s["block_solve"], r["iterations"], r["converged"], r["status"], r["wall_time"], ref)
                    except (ValueError, MemoryError, ArithmeticError) as err:
                        log.warning("cell h=1/%s p=%s sigma=%s %s failed: %s", h_inv, p, sigma, solver, err)
                        cell = Cell(h_inv, p, s["m"], sigma, solver, s["block_solve"], None, False, f"error: {err}", None, ref)
                    cells.append(cell)
                    if progress is not None:
                        progress(cell)
                problem = None
    return TableResult(table_id, s, cells)


def _fmt(cell):
    if cell.iterations is None:
        return "ERR"
    return str(cell.iterations) if cell.converged else f"{cell.iterations}*"


def _table_csv(res):
    """CSV in the printed layout; non-converged counts carry a trailing ``*``."""
    s = res.settings
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if res.table_id == "table2":
        # one row per (h, sigma); column groups per solver, one column per p
        head = ["h_inv", "sigma"]
        head += [f"{sv}_p{p}" for sv in s["solvers"] for p in s["p"]]
        head += [f"ref_{sv}" for sv in s["solvers"]]
        w.writerow(head)
        for h in s["h_inv"]:
            for sg in s["sigma"]:
                row = [h, sg]
                row += [_fmt(res.lookup(h_inv=h, p=p, sigma=sg, solver=sv)) for sv in s["solvers"] for p in s["p"]]
                row += [_ref_str(res.lookup(h_inv=h, p=s["p"][0], sigma=sg, solver=sv).reference) for sv in s["solvers"]]
                w.writerow(row)
    else:
        # one row per solver and (h, p); one column per sigma, then references and times
        head = ["solver", "h_inv", "p"]
        head += [f"sigma_{sg:g}" for sg in s["sigma"]]
        head += [f"ref_sigma_{sg:g}" for sg in s["sigma"]]
        head += [f"time_sigma_{sg:g}" for sg in s["sigma"]]
        w.writerow(head)
        for sv in s["solvers"]:
            for h in s["h_inv"]:
                for p in s["p"]:
                    cs = [res.lookup(h_inv=h, p=p, sigma=sg, solver=sv) for sg in s["sigma"]]
                    row = [sv, h, p] + [_fmt(c) for c in cs] + [_ref_str(c.reference) for c in cs]
                    row += ["" if c.wall_time is None else f"{c.wall_time:.2f}" for c in cs]
                    w.writerow(row)
    return buf.getvalue()


def _ref_str(ref):
    return "" if ref is None else str(ref)


# ---------------------------------------------------------------- diagnostics


def run_diagnostics(config: ExperimentConfig, problem: Problem | None = None, n_vectors=20):
    """Spectral and oracle checks that fit the instance size.

    Returns ``(record, exit_code)``; exit code 3 flags any failed bound.
    """
    if problem is None:
        problem = build_problem(config)
    op, kl = problem.op, problem.kl
    checks = {}
    failed = []

    def record_check(name, ok, payload):
        checks[name] = dict(payload, passed=bool(ok))
        if not ok:
            failed.append(name)

    N = op.shape[0]
    if N <= MAX_EXPLICIT_SIZE:
        rng = np.random.default_rng(config.seed)
        A = assemble_explicit(op)
        worst = 0.0
        for _ in range(n_vectors):
            v = rng.standard_normal(N)
            ref = A @ v
            worst = max(worst, float(np.linalg.norm(op.apply(v) - ref) / np.linalg.norm(ref)))
        record_check("matvec_oracle", worst <= 1e-12, {"max_rel_err": worst, "n_vectors": n_vectors})
    if N <= dg.MAX_DENSE:
        bt = dg.spectrum_precond_BT(op)
        ok = bt.bound_satisfied and bt.max_imag_abs <= 1e-9 and bt.extras["multiplicity_of_one"] >= bt.extras["dim_A_hat"]
        record_check("spectrum_AB_T", ok, bt.to_dict())
        schur = dg.generalized_schur_spectrum(op)
        same, diff = dg.compare_with_schur(bt, schur)
        record_check("schur_pencil", schur.bound_satisfied, schur.to_dict())
        record_check("schur_multiset", same, {"max_diff": diff})
        bs = dg.spectrum_precond_BS(op)
        record_check("spectrum_B_S", bs.bound_satisfied and bs.max_imag_abs <= 1e-9, bs.to_dict())
        if op.p == 1:
            pb = dg.p1_lower_bound(op, kl)
            record_check("p1_lower_bound", pb.bound_satisfied, pb.to_dict())
    if op.n_x <= dg.MAX_DENSE:
        reps = dg.kl_interval_checks(op, kl)
        record_check(
            "stiffness_ratio_interval",
            all(r.bound_satisfied for r in reps),
            {"per_k": [r.to_dict() for r in reps]},
        )
    record = {
        "schema": SCHEMA,
        "config": config.to_dict(),
        "problem": _problem_info(problem),
        "diagnostics": checks,
        "failed": failed,
    }
    return record, (EXIT_BOUND_VIOLATED if failed else EXIT_OK)


def with_overrides(config, **kw):
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
