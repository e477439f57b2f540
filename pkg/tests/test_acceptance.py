"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in pytest's terminal summary.
Set ``SGFEM_FULL_SCALE=1`` to add the optional h=1/64, p=4, m=6 sweep.
Run directly with ``python3 tests/test_acceptance.py``.
"""

import functools
import os
import sys

import numpy as np
import pytest
from scipy.sparse.linalg import spsolve

from conftest import make_problem
from sgfem import diagnostics as dg
from sgfem import krylov_precond as kp
from sgfem.mesh_fem import build_mesh
from sgfem.multigrid import build_hierarchy, v_cycle
from sgfem.sg_system import MAX_EXPLICIT_SIZE, assemble_explicit, structure_summary

RESULTS = []

TABLE2_REF = {"bd-pcg": 13, "bt-gpcg": 9, "bs-pcg": 9, "bt-gmres": 8}
TABLE3_REF = {
    "bgs": (13, 16, 24, 65),
    "bd-pcg": (13, 18, 27, 49),
    "bt-gpcg": (9, 10, 13, 22),
    "bt-gmres": (8, 9, 12, 20),
    "bs-pcg": (9, 10, 12, 20),
}
SIGMAS = (0.1, 0.2, 0.3, 0.4)

# every (n, m, p, sigma) the suite builds; criterion 8 covers those with N <= 200k
TEST_GRID = (
    [(32, 4, p, 0.1) for p in (2, 3, 4)]
    + [(64, 4, 3, 0.1)]
    + [(32, 4, 3, s) for s in SIGMAS]
    + [(8, 2, 2, 0.3), (8, 3, 2, 0.4), (16, 4, 1, 0.1), (16, 4, 1, 0.3), (16, 6, 1, 0.2), (16, 2, 2, 0.2)]
)


def verdict(number, ok, detail):
    line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@functools.lru_cache(maxsize=None)
def problem(n, m, p, sigma):
    return make_problem(n, m, p, sigma)


@functools.lru_cache(maxsize=None)
def count(n, m, p, sigma, solver, mode="mg_v22"):
    op, b = problem(n, m, p, sigma)[3:]
    _, rep = kp.solve(op, solver, mode, b, tol=1e-10, max_iter=1000, restart=10)
    assert rep.converged, f"{solver} did not converge on {(n, m, p, sigma)}: {rep.status}"
    return rep.iterations


def test_criterion_01_table2_h32():
    bad, cells = [], []
    for solver, ref in TABLE2_REF.items():
        for p in (2, 3, 4):
            it = count(32, 4, p, 0.1, solver)
            cells.append(f"{solver}/p{p}={it}")
            if abs(it - ref) > 2:
                bad.append(f"{solver} p={p}: {it} vs {ref}")
    verdict(1, not bad, "Table 2 h=1/32 m=4 sigma=0.1 (ref 13/9/9/8, +-2): " + " ".join(cells) + ("" if not bad else f" | off: {bad}"))


def test_criterion_02_h_uniformity():
    out, ok = [], True
    for solver in kp.SOLVERS:
        a, b = count(32, 4, 3, 0.1, solver), count(64, 4, 3, 0.1, solver)
        ok &= abs(a - b) <= 1
        out.append(f"{solver} {a}->{b}")
    verdict(2, ok, "p=3 m=4 sigma=0.1, h=1/32 -> 1/64 differ <= 1: " + ", ".join(out))


def test_criterion_03_sigma_trend():
    counts = {s: [count(32, 4, 3, sg, s) for sg in SIGMAS] for s in kp.SOLVERS}
    mono = {s: all(np.diff(c) >= 0) for s, c in counts.items()}
    ratio = [counts["bd-pcg"][i] / counts["bt-gpcg"][i] for i in range(len(SIGMAS))]
    ratio_ok = all(np.diff(ratio) >= 0)
    table = "; ".join(f"{s} {'/'.join(map(str, c))}" for s, c in counts.items())
    rtxt = "/".join(f"{r:.3f}" for r in ratio)
    detail = (
        f"h=1/32 p=3 m=4 sigma 0.1..0.4: {table} | counts non-decreasing: {all(mono.values())}"
        f" | BD/GPCG ratio {rtxt} non-decreasing: {ratio_ok}"
    )
    verdict(3, all(mono.values()) and ratio_ok, detail)


@pytest.mark.skipif(os.environ.get("SGFEM_FULL_SCALE") != "1", reason="set SGFEM_FULL_SCALE=1 for the h=1/64 p=4 m=6 sweep")
def test_criterion_03_full_scale_table3():
    off, cells = [], []
    for solver, refs in TABLE3_REF.items():
        for sg, ref in zip(SIGMAS, refs):
            it = count(64, 6, 4, sg, solver)
            cells.append(f"{solver}@{sg}={it}({ref})")
            if abs(it - ref) > 0.15 * ref:
                off.append(f"{solver}@{sg}")
    verdict("3b", not off, "Table 3 full scale +-15%: " + " ".join(cells) + ("" if not off else f" | outside: {off}"))


def test_criterion_04_dimensions():
    info = structure_summary(6, 4, 64)
    got = (info["N_xi"], info["A"], info["A_hat"], info["D"])
    verdict(4, got == (210, 833_490, 333_396, 500_094), f"N_xi, N, dim A_hat, dim D = {got}")


def test_criterion_05_spectrum_BT():
    ok, parts = True, []
    for cfg in ((8, 2, 2, 0.3), (8, 3, 2, 0.4)):
        op = problem(*cfg)[3]
        rep = dg.spectrum_precond_BT(op)
        mult, dim = rep.extras["multiplicity_of_one"], rep.extras["dim_A_hat"]
        this = rep.max_imag_abs <= 1e-9 and rep.min_real > 0 and rep.max_real <= 1 + 1e-8 and mult >= dim
        same, diff = dg.compare_with_schur(rep, dg.generalized_schur_spectrum(op))
        ok &= this
        parts.append(
            f"(h=1/{cfg[0]} m={cfg[1]} p={cfg[2]} sigma={cfg[3]}) |imag|max={rep.max_imag_abs:.1e}"
            f" Re in [{rep.min_real:.4f}, {1 + (rep.max_real - 1):.12f}] mult(1)={mult}>={dim}"
            f" schur-multiset diff={diff:.1e}"
        )
    verdict(5, ok, "; ".join(parts))


def test_criterion_06_p1_bound():
    ok, parts = True, []
    for sigma in (0.1, 0.3):
        _, kl, _, op, _ = problem(16, 4, 1, sigma)
        rep = dg.p1_lower_bound(op, kl)
        ok &= rep.bound_satisfied and rep.extras["c_equal"]
        parts.append(f"sigma={sigma}: min mu={rep.extras['min_eigenvalue']:.6f} >= bound={rep.bound_value:.6f} (c={rep.extras['c']:.15g})")
    verdict(6, ok, "; ".join(parts))


def test_criterion_07_interval_lemma():
    _, kl, _, op, _ = problem(16, 6, 1, 0.2)
    reps = dg.kl_interval_checks(op, kl)
    ok = all(r.bound_satisfied for r in reps)
    txt = " ".join(f"k{k + 1}:{max(abs(r.min_real), abs(r.max_real)):.4f}<={r.bound_value:.4f}" for k, r in enumerate(reps))
    verdict(7, ok, f"h=1/16 m=6 sigma=0.2 spectral radius vs bound: {txt}")


def test_criterion_08_matvec_oracle():
    rng = np.random.default_rng(2024)
    worst, checked = 0.0, []
    for cfg in TEST_GRID:
        op = problem(*cfg)[3]
        if op.shape[0] > MAX_EXPLICIT_SIZE:
            continue
        A = assemble_explicit(op)
        for _ in range(20):
            v = rng.standard_normal(op.shape[0])
            ref = A @ v
            worst = max(worst, np.linalg.norm(op.apply(v) - ref) / np.linalg.norm(ref))
        checked.append(op.shape[0])
    verdict(8, worst <= 1e-12, f"{len(checked)} instances (N up to {max(checked)}), 20 vectors each, max rel err {worst:.2e}")


def test_criterion_09_multigrid():
    rates, sym = [], 0.0
    rng = np.random.default_rng(7)
    for n in (16, 32, 64):
        H = build_hierarchy(build_mesh(n), 1.0)
        A = H.fine_matrix
        b = rng.standard_normal(A.shape[0])
        x = spsolve(A.tocsc(), b)
        e = x - v_cycle(H, b)
        rates.append(float(np.sqrt(e @ (A @ e)) / np.sqrt(x @ (A @ x))))
        u, w = rng.standard_normal((2, A.shape[0]))
        sym = max(sym, abs(v_cycle(H, u) @ w - u @ v_cycle(H, w)) / abs(u @ v_cycle(H, w)))
    ok = max(rates) <= 0.15 and max(rates) - min(rates) <= 0.05 and sym <= 1e-10
    verdict(9, ok, "V(2,2) energy contraction h=1/16,1/32,1/64: " + ", ".join(f"{r:.4f}" for r in rates) + f"; variation {max(rates) - min(rates):.4f}; symmetry {sym:.1e}")


def test_criterion_10_solver_cross_validation():
    op, b = problem(16, 2, 2, 0.2)[3:]
    xs = spsolve(assemble_explicit(op).tocsc(), b)
    errs = {}
    for mode in ("exact", "mg_v22"):
        for s in kp.SOLVERS:
            x, rep = kp.solve(op, s, mode, b, tol=1e-10)
            errs[f"{s}/{mode}"] = np.linalg.norm(x - xs) / np.linalg.norm(xs)
    dev = 0.0
    for mode in ("exact", "mg_v22"):
        xp, xg = [], []
        kp.pcg_solve(op, "BD", mode, b, callback=lambda x: xp.append(x.copy()))
        kp.gpcg_solve(op, "BD", mode, b, callback=lambda x: xg.append(x.copy()))
        if len(xp) != len(xg):
            dev = np.inf
            break
        dev = max([dev] + [np.linalg.norm(a - c) / np.linalg.norm(a) for a, c in zip(xp, xg)])
    ok = max(errs.values()) <= 1e-7 and dev <= 1e-10
    verdict(10, ok, f"max rel err vs direct {max(errs.values()):.1e} over {len(errs)} runs; GPCG vs PCG iterate deviation {dev:.1e}")


def test_info_recursive_bt_spectrum():
    # informational: B_T as applied by the solvers (every mode block diagonal exact)
    for cfg in ((8, 2, 2, 0.3), (8, 3, 2, 0.4)):
        rep = dg.spectrum_precond_BT(problem(*cfg)[3], "recursive")
        line = f"INFO        recursive B_T {cfg}: Re in [{rep.min_real:.4f}, {rep.max_real:.12f}], |imag|max {rep.max_imag_abs:.1e}"
        RESULTS.append(line)
        print(line)
        assert rep.min_real > 0 and rep.max_real <= 1 + 1e-8


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
