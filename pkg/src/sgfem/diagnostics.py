"""Dense spectral checks of the block preconditioners on small instances.

Everything here forms dense matrices, so each entry point refuses problems
with more than ``MAX_DENSE`` unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .krylov_precond import apply_BS_inverse
from .sg_system import assemble_explicit

MAX_DENSE = 5000
SUP_INFLATION = 1.01
ONE_TOL = 1e-8


@dataclass
class SpectralReport:
    """Eigenvalues of a preconditioned operator and the bound tested on them.

    ``eigenvalues`` are sorted by real part, ascending.  ``extras`` holds
    check-specific numbers (multiplicity of 1, the constant c, ...).
    """

    eigenvalues: np.ndarray
    max_imag_abs: float
    min_real: float
    max_real: float
    bound_value: float
    bound_satisfied: bool
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_eigenvalues(cls, ev, bound_value, bound_satisfied, **extras):
        ev = np.asarray(ev)
        ev = ev[np.argsort(ev.real, kind="stable")]
        return cls(
            eigenvalues=ev,
            max_imag_abs=float(np.abs(ev.imag).max()) if np.iscomplexobj(ev) else 0.0,
            min_real=float(ev.real.min()),
            max_real=float(ev.real.max()),
            bound_value=float(bound_value),
            bound_satisfied=bool(bound_satisfied),
            extras=extras,
        )

    def to_dict(self, with_eigenvalues=False):
        out = {
            "max_imag_abs": self.max_imag_abs,
            "min_real": self.min_real,
            "max_real": self.max_real,
            "bound_value": self.bound_value,
            "bound_satisfied": self.bound_satisfied,
            "n_eigenvalues": int(len(self.eigenvalues)),
        }
        out.update({k: _jsonable(v) for k, v in self.extras.items()})
        if with_eigenvalues:
            out["eigenvalues_real"] = self.eigenvalues.real.tolist()
            out["eigenvalues_imag"] = np.imag(self.eigenvalues).tolist()
        return out


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def _guard(n, what="operator"):
    if n > MAX_DENSE:
        raise ValueError(f"{what} has {n} unknowns; dense diagnostics are limited to {MAX_DENSE}")


def _dense(op):
    _guard(op.shape[0])
    return assemble_explicit(op).toarray()


def dense_BT(op, variant="two_level"):
    """Explicit block lower triangular preconditioner.

    ``two_level`` keeps the whole leading block Â (all modes below the top
    grade) and drops only its coupling to the top grade.  ``recursive`` drops
    every block above the mode diagonal, which is what the iterative solvers
    apply when the diagonal blocks are solved exactly.
    """
    A = _dense(op)
    nx = op.n_x
    if variant == "two_level":
        s = op.split_point * nx
        A[:s, s:] = 0.0
    elif variant == "recursive":
        for i in range(op.n_xi):
            A[i * nx : (i + 1) * nx, (i + 1) * nx :] = 0.0
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return A


def _count_ones(ev, tol=ONE_TOL):
    return int(np.sum(np.abs(ev - 1.0) <= tol))


def spectrum_precond_BT(op, variant="two_level", eps=ONE_TOL):
    """Eigenvalues of A B_T^{-1}; the bound tested is containment in (0, 1+eps]."""
    A = _dense(op)
    BT = dense_BT(op, variant)
    # A B^{-1} = (B^{-T} A^T)^T
    M = sla.solve(BT.T, A.T).T
    ev = sla.eigvals(M)
    ok = bool(ev.real.min() > 0 and ev.real.max() <= 1 + eps)
    dim_hat = op.split_point * op.n_x if op.p >= 1 else op.shape[0]
    return SpectralReport.from_eigenvalues(
        ev, 1.0 + eps, ok, multiplicity_of_one=_count_ones(ev), dim_A_hat=dim_hat, variant=variant
    )


def generalized_schur_spectrum(op, eps=ONE_TOL):
    """Eigenvalues of S z = mu D z with S = D - W Â^{-1} W^T."""
    if op.p < 1:
        raise ValueError("the Schur complement needs p >= 1")
    A = _dense(op)
    s = op.split_point * op.n_x
    Ah, Wt, W, D = A[:s, :s], A[:s, s:], A[s:, :s], A[s:, s:]
    S = D - W @ sla.solve(Ah, Wt, assume_a="pos")
    S = 0.5 * (S + S.T)
    mu = sla.eigh(S, D, eigvals_only=True)
    ok = bool(mu.min() > 0 and mu.max() <= 1 + eps)
    return SpectralReport.from_eigenvalues(mu, 1.0 + eps, ok, multiplicity_of_one=_count_ones(mu))


def compare_with_schur(bt, schur, tol=1e-7, one_tol=ONE_TOL):
    """Check sigma(A B_T^{-1}) minus {1} against sigma(S, D) minus {1} as multisets.

    Returns ``(ok, max_diff)``; ``max_diff`` is inf when the counts differ.
    """
    a = bt.eigenvalues
    b = schur.eigenvalues
    if np.abs(np.imag(a)).max(initial=0) > tol:
        return False, np.inf
    a = np.sort(a.real[np.abs(a - 1) > one_tol])
    b = np.sort(b.real[np.abs(b - 1) > one_tol])
    if len(a) != len(b):
        return False, np.inf
    d = float(np.abs(a - b).max(initial=0.0))
    return d <= tol, d


def spectrum_precond_BS(op, eps=ONE_TOL):
    """Eigenvalues of B_S^{-1} A with exact diagonal blocks."""
    A = _dense(op)
    n = A.shape[0]
    Binv = np.column_stack([apply_BS_inverse(op, "exact", e) for e in np.eye(n)])
    ev = sla.eigvals(Binv @ A)
    ok = bool(ev.real.min() > 0 and ev.real.max() <= 1 + eps)
    return SpectralReport.from_eigenvalues(ev, 1.0 + eps, ok)


def p1_constants(op):
    """c_k = |G_k[1:, 0]|^2 for each random variable, from the assembled G."""
    return np.array([float(np.sum(op.G[k][1:, 0].toarray() ** 2)) for k in range(1, op.m + 1)])


def p1_lower_bound(op, kl, n_grid=129, c_tol=1e-12):
    """Smallest eigenvalue of B_T^{-1} A for p = 1 against 1 - c sum lambda_k |b_k|^2 / a^2.

    If the constants c_k differ across k the largest is used and the report
    records ``c_equal = False``.
    """
    if op.p != 1:
        raise ValueError(f"p1_lower_bound needs p = 1, got p = {op.p}")
    c_all = p1_constants(op)
    c_equal = bool(np.ptp(c_all) <= c_tol)
    c = float(c_all.max())
    sup = SUP_INFLATION * kl.sup_norms(n_grid)
    bound = 1.0 - c * float(np.sum(kl.eigenvalues * sup**2)) / kl.mean**2
    rep = spectrum_precond_BT(op, "two_level")
    mu_min = rep.min_real
    return SpectralReport.from_eigenvalues(
        rep.eigenvalues,
        bound,
        mu_min >= bound,
        c=c,
        c_values=c_all,
        c_equal=c_equal,
        min_eigenvalue=mu_min,
    )


def stiffness_ratio_interval(K0, Kk, lambda_k, b_k, a_bar, n_grid=129):
    """Eigenvalues of K0^{-1} K_k against +-sqrt(lambda_k) |b_k| / a.

    ``b_k`` is a callable ``(x, y)`` on the square; its sup norm is a grid
    maximum inflated by one percent.
    """
    _guard(K0.shape[0], "stiffness matrix")
    g = np.linspace(-0.5, 0.5, n_grid)
    X, Y = np.meshgrid(g, g)
    sup = SUP_INFLATION * float(np.abs(b_k(X, Y)).max())
    r = np.sqrt(lambda_k) * sup / a_bar
    K0d = K0.toarray()
    Kkd = Kk.toarray()
    ev = sla.eigh(0.5 * (Kkd + Kkd.T), K0d, eigvals_only=True)
    ok = bool(ev.min() >= -r and ev.max() <= r)
    return SpectralReport.from_eigenvalues(ev, r, ok, sup_norm=sup)


def kl_interval_checks(op, kl, n_grid=129):
    """``stiffness_ratio_interval`` for every k = 1..m of an operator."""
    return [
        stiffness_ratio_interval(op.K[0], op.K[k + 1], kl.eigenvalues[k], _eigfun(kl, k), kl.mean, n_grid)
        for k in range(kl.m)
    ]


def _eigfun(kl, k):
    return lambda x, y: kl.eigenfunction(k, x, y)
