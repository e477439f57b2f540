"""Block preconditioners and outer iterations for the stochastic Galerkin system.

Preconditioners
    ``BD``  mean-based, ``I (x) K_0`` block diagonal.
    ``BT``  lower block triangle of the grade-partitioned matrix.  The upper-left
            block is itself the degree ``p-1`` Galerkin matrix and is treated by
            the same split recursively, which reduces to one forward block
            Gauss-Seidel sweep over the chaos modes, grade by grade.
    ``BS``  symmetric block Gauss-Seidel ``L diag^{-1} U`` built from the same
            recursive split: forward sweep, diagonal scaling, backward sweep.

Every diagonal block is a ``K_0`` solve, done either with one sparse LU of
``K_0`` (``exact``) or one V(2,2) multigrid cycle from a zero guess
(``mg_v22``).  Modes of one grade do not couple, so each grade is solved as a
single batch of right-hand sides.
"""
import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .multigrid import build_hierarchy, v_cycle


class BlockSolverMode(str, enum.Enum):
    EXACT = "exact"
    MG_V22 = "mg_v22"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).replace("-", "_").lower())


class BreakdownError(ArithmeticError):
    """A Krylov recurrence hit a non-positive quantity it must divide by."""

    def __init__(self, quantity, value, iteration):
        self.quantity = quantity
        self.value = value
        self.iteration = iteration
        super().__init__(f"breakdown at iteration {iteration}: {quantity} = {value:.3e} <= 0")


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    matvec_count: int = 0
    block_solve_count: int = 0
    status: str = "running"

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "converged": self.converged,
            "wall_time": self.wall_time,
            "matvec_count": self.matvec_count,
            "block_solve_count": self.block_solve_count,
            "status": self.status,
        }


class ExactBlockSolver:
    def __init__(self, K0):
        self._lu = splu(K0.tocsc())
        self.count = 0

    def solve(self, R):
        """Solve ``K_0 z_j = r_j`` for every row ``r_j`` of ``R``."""
        self.count += R.shape[0]
        return self._lu.solve(np.ascontiguousarray(R.T)).T


class MultigridBlockSolver:
    def __init__(self, hierarchy, nu_pre=2, nu_post=2):
        self.hierarchy = hierarchy
        self.nu_pre = nu_pre
        self.nu_post = nu_post
        self.count = 0

    def solve(self, R):
        self.count += R.shape[0]
        Z = v_cycle(self.hierarchy, np.ascontiguousarray(R.T), None, self.nu_pre, self.nu_post)
        return Z.T


def block_solver(op, mode):
    """Cached diagonal-block solver of ``op`` for the given mode."""
    mode = BlockSolverMode.parse(mode)
    key = ("block_solver", mode)
    if key not in op.cache:
        if mode is BlockSolverMode.EXACT:
            op.cache[key] = ExactBlockSolver(op.K[0])
        else:
            if op.mesh is None:
                raise ValueError("multigrid block solves need the operator's mesh")
            op.cache[key] = MultigridBlockSolver(build_hierarchy(op.mesh, op.mean))
    return op.cache[key]


def _solver_of(op, mode):
    if hasattr(mode, "solve"):
        return mode
    return block_solver(op, mode)


def apply_BD_inverse(op, mode, r):
    S = _solver_of(op, mode)
    R = op.chunks(r)
    return np.ascontiguousarray(S.solve(R)).ravel()


def _forward_sweep(op, S, R):
    Z = np.zeros_like(R)
    for d in range(op.p + 1):
        sl = op.mis.grade_slice(d)
        rhs = R[sl]
        if d > 0:
            rhs = rhs - op.coupling_apply(d, d - 1, Z[op.mis.grade_slice(d - 1)])
        Z[sl] = S.solve(rhs)
    return Z


def _backward_scaled(op, S, Y):
    """Solve ``[A_hat W^T; 0 D] z = diag(A_hat, D) y`` recursively.

    The top grade needs no solve (``D^{-1} D = I``); each lower grade is
    ``z_d = y_d - K_0^{-1} (coupling to grade d + 1) z_{d+1}``.
    """
    Z = Y.copy()
    for d in range(op.p - 1, -1, -1):
        sl = op.mis.grade_slice(d)
        Z[sl] -= S.solve(op.coupling_apply(d, d + 1, Z[op.mis.grade_slice(d + 1)]))
    return Z


def apply_BT_inverse(op, mode, r):
    S = _solver_of(op, mode)
    return _forward_sweep(op, S, op.chunks(r)).ravel()


def apply_BS_inverse(op, mode, r):
    S = _solver_of(op, mode)
    Y = _forward_sweep(op, S, op.chunks(r))
    return _backward_scaled(op, S, Y).ravel()


PRECONDITIONERS = {"BD": apply_BD_inverse, "BT": apply_BT_inverse, "BS": apply_BS_inverse}


class _Counter:
    """Wraps an operator and a preconditioner with application counts."""

    def __init__(self, apply_A, apply_M=None):
        self._A = apply_A
        self._M = apply_M
        self.matvecs = 0

    def A(self, v):
        self.matvecs += 1
        return self._A(v)

    def M(self, v):
        return self._M(v)


def _relres(r, bnorm):
    return float(np.linalg.norm(r) / bnorm)


def _start(b):
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    rep = SolveReport()
    return b, x, bnorm, rep


def _finish(rep, t0, converged, status):
    rep.converged = converged
    rep.status = status
    rep.wall_time = time.perf_counter() - t0
    return rep


def stationary_core(apply_A, apply_M, b, tol=1e-10, max_iter=1000, callback=None, divergence=1e6):
    """x <- x + M^{-1}(b - A x) from x = 0."""
    t0 = time.perf_counter()
    b, x, bnorm, rep = _start(b)
    ops = _Counter(apply_A, apply_M)
    if bnorm == 0.0:
        rep.residual_history = [0.0]
        return x, _finish(rep, t0, True, "converged")
    r = b.copy()
    rep.residual_history.append(1.0)
    status = "max_iter"
    for it in range(1, max_iter + 1):
        x += ops.M(r)
        r = b - ops.A(x)
        rel = _relres(r, bnorm)
        rep.iterations = it
        rep.residual_history.append(rel)
        if callback is not None:
            callback(x)
        if rel < tol:
            status = "converged"
            break
        if not np.isfinite(rel) or rel > divergence:
            status = "diverged"
            break
    rep.matvec_count = ops.matvecs
    return x, _finish(rep, t0, status == "converged", status)


def pcg_core(apply_A, apply_M, b, tol=1e-10, max_iter=1000, callback=None):
    """Preconditioned CG; stops on the (recursive) unpreconditioned residual."""
    t0 = time.perf_counter()
    b, x, bnorm, rep = _start(b)
    ops = _Counter(apply_A, apply_M)
    if bnorm == 0.0:
        rep.residual_history = [0.0]
        return x, _finish(rep, t0, True, "converged")
    r = b.copy()
    rep.residual_history.append(1.0)
    z = ops.M(r)
    rz = float(r @ z)
    if rz <= 0:
        raise BreakdownError("<r, z>", rz, 0)
    p = z.copy()
    status = "max_iter"
    for it in range(1, max_iter + 1):
        Ap = ops.A(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise BreakdownError("<A p, p>", pAp, it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = _relres(r, bnorm)
        rep.iterations = it
        rep.residual_history.append(rel)
        if callback is not None:
            callback(x)
        if rel < tol:
            status = "converged"
            break
        z = ops.M(r)
        rz_new = float(r @ z)
        if rz_new <= 0:
            raise BreakdownError("<r, z>", rz_new, it)
        p = z + (rz_new / rz) * p
        rz = rz_new
    rep.matvec_count = ops.matvecs
    return x, _finish(rep, t0, status == "converged", status)


def gpcg_core(apply_A, apply_M, b, tol=1e-10, max_iter=1000, callback=None, on_direction=None):
    """GPCG[1]: each new direction is A-orthogonalised against the previous one.

    Valid for a nonsymmetric preconditioner as long as A is SPD.
    ``on_direction(d_new, Ad_new, d_old)`` is called after each update.
    """
    t0 = time.perf_counter()
    b, x, bnorm, rep = _start(b)
    ops = _Counter(apply_A, apply_M)
    if bnorm == 0.0:
        rep.residual_history = [0.0]
        return x, _finish(rep, t0, True, "converged")
    r = b.copy()
    rep.residual_history.append(1.0)
    d = ops.M(r)
    Ad = ops.A(d)
    status = "max_iter"
    for it in range(1, max_iter + 1):
        dAd = float(d @ Ad)
        if dAd <= 0:
            raise BreakdownError("<A d, d>", dAd, it)
        alpha = float(r @ d) / dAd
        x += alpha * d
        r -= alpha * Ad
        rel = _relres(r, bnorm)
        rep.iterations = it
        rep.residual_history.append(rel)
        if callback is not None:
            callback(x)
        if rel < tol:
            status = "converged"
            break
        z = ops.M(r)
        Az = ops.A(z)
        beta = -float(Az @ d) / dAd
        d_old = d
        d = z + beta * d
        Ad = Az + beta * Ad
        if on_direction is not None:
            on_direction(d, Ad, d_old)
    rep.matvec_count = ops.matvecs
    return x, _finish(rep, t0, status == "converged", status)


def gmres_core(apply_A, apply_M, b, tol=1e-10, max_iter=1000, restart=10, callback=None):
    """Right-preconditioned restarted GMRes with modified Gram-Schmidt.

    Iterations count Arnoldi steps.  A cycle ends early once the least-squares
    residual estimate drops below ``tol``; convergence is then confirmed on the
    true residual ``b - A x``.
    """
    if restart < 1:
        raise ValueError("restart must be >= 1")
    t0 = time.perf_counter()
    b, x, bnorm, rep = _start(b)
    ops = _Counter(apply_A, apply_M)
    if bnorm == 0.0:
        rep.residual_history = [0.0]
        return x, _finish(rep, t0, True, "converged")
    r = b.copy()
    beta = float(np.linalg.norm(r))
    rep.residual_history.append(beta / bnorm)
    n = len(b)
    status = "max_iter"
    its = 0
    while its < max_iter:
        V = np.zeros((restart + 1, n))
        Z = np.zeros((restart, n))
        H = np.zeros((restart + 1, restart))
        cs = np.zeros(restart)
        sn = np.zeros(restart)
        g = np.zeros(restart + 1)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        happy = False
        for j in range(restart):
            Z[j] = ops.M(V[j])
            w = ops.A(Z[j])
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            happy = H[j + 1, j] <= 1e-14 * abs(H[j, j]) + 1e-300
            if not happy:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            its += 1
            j_used = j + 1
            est = abs(g[j + 1]) / bnorm
            rep.residual_history.append(est)
            if est < tol or happy or its >= max_iter:
                break
        y = np.linalg.solve(np.triu(H[:j_used, :j_used]), g[:j_used])
        x += Z[:j_used].T @ y
        r = b - ops.A(x)
        beta = float(np.linalg.norm(r))
        rel = beta / bnorm
        rep.residual_history[-1] = rel
        if callback is not None:
            callback(x)
        if rel < tol or happy:
            # happy breakdown: the Krylov space holds the solution
            status = "converged"
            break
    rep.iterations = its
    rep.matvec_count = ops.matvecs
    return x, _finish(rep, t0, status == "converged", status)


def _bind(op, precond, mode):
    S = _solver_of(op, mode)
    fn = PRECONDITIONERS[precond]
    start = S.count
    return S, start, (lambda r: fn(op, S, r))


def _run(core, op, precond, mode, b, **kw):
    S, start, M = _bind(op, precond, mode)
    x, rep = core(op.apply, M, b, **kw)
    rep.block_solve_count = S.count - start
    return x, rep


def block_gauss_seidel_solve(op, mode, b, tol=1e-10, max_iter=1000, callback=None):
    return _run(stationary_core, op, "BT", mode, b, tol=tol, max_iter=max_iter, callback=callback)


def pcg_solve(op, precond, mode, b, tol=1e-10, max_iter=1000, callback=None):
    if precond not in ("BD", "BS"):
        raise ValueError("PCG needs a symmetric preconditioner: 'BD' or 'BS'")
    return _run(pcg_core, op, precond, mode, b, tol=tol, max_iter=max_iter, callback=callback)


def gmres_solve(op, precond, mode, b, tol=1e-10, max_iter=1000, restart=10, callback=None):
    return _run(gmres_core, op, precond, mode, b, tol=tol, max_iter=max_iter, restart=restart, callback=callback)


def gpcg_solve(op, precond, mode, b, tol=1e-10, max_iter=1000, callback=None, on_direction=None):
    return _run(
        gpcg_core, op, precond, mode, b, tol=tol, max_iter=max_iter, callback=callback, on_direction=on_direction
    )


SOLVERS = ("bgs", "bd-pcg", "bt-gpcg", "bt-gmres", "bs-pcg")


def solve(op, solver, mode, b, tol=1e-10, max_iter=1000, restart=10):
    """Dispatch by the short solver names used in the experiment tables."""
    if solver == "bgs":
        return block_gauss_seidel_solve(op, mode, b, tol, max_iter)
    if solver == "bd-pcg":
        return pcg_solve(op, "BD", mode, b, tol, max_iter)
    if solver == "bs-pcg":
        return pcg_solve(op, "BS", mode, b, tol, max_iter)
    if solver == "bt-gpcg":
        return gpcg_solve(op, "BT", mode, b, tol, max_iter)
    if solver == "bt-gmres":
        return gmres_solve(op, "BT", mode, b, tol, max_iter, restart)
    raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
