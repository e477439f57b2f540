"""Geometric multigrid V-cycle on the nested uniform triangulations.

Level matrices are re-assembled on each mesh (not Galerkin products);
transfers are P1 linear interpolation and its transpose.  Smoothing is
forward point Gauss-Seidel before the coarse correction and backward after,
which makes the zero-initial-guess V-cycle a symmetric operator.

All vectors may carry a trailing batch axis: ``b`` of shape ``(n,)`` or
``(n, nrhs)``; every column is an independent problem.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels
from .mesh_fem import assemble_weighted_stiffness, build_mesh, is_power_of_two


@dataclass(frozen=True, eq=False)
class GridHierarchy:
    meshes: list  # coarsest first
    matrices: list
    prolongations: list  # prolongations[l] maps level l to level l + 1
    sweep_data: list
    coarse_factor: tuple

    @property
    def n_levels(self):
        return len(self.meshes)

    @property
    def fine_matrix(self):
        return self.matrices[-1]


def prolongation(coarse_n):
    """Linear interpolation from the ``coarse_n`` mesh to the ``2 coarse_n`` mesh.

    Fine nodes at coarse-edge midpoints take the mean of the edge endpoints;
    the edges are horizontal, vertical and the lower-left/upper-right diagonal.
    Boundary coarse nodes carry zero and are dropped.
    """
    nc, nf = coarse_n, 2 * coarse_n

    def cidx(I, J):
        # interior numbering on the coarse grid, -1 on the boundary
        inside = (I >= 1) & (I <= nc - 1) & (J >= 1) & (J <= nc - 1)
        return np.where(inside, (J - 1) * (nc - 1) + (I - 1), -1)

    fi, fj = np.meshgrid(np.arange(1, nf), np.arange(1, nf))
    fi = fi.ravel()
    fj = fj.ravel()
    frow = (fj - 1) * (nf - 1) + (fi - 1)
    ci0, cj0 = fi // 2, fj // 2
    ci1, cj1 = (fi + 1) // 2, (fj + 1) // 2
    # both even: ci0 == ci1 and cj0 == cj1, the two "endpoints" coincide
    a = cidx(ci0, cj0)
    b = cidx(ci1, cj1)
    same = (ci0 == ci1) & (cj0 == cj1)
    rows = np.concatenate([frow[same], frow[~same], frow[~same]])
    cols = np.concatenate([a[same], a[~same], b[~same]])
    vals = np.concatenate([np.ones(same.sum()), np.full((~same).sum(), 0.5), np.full((~same).sum(), 0.5)])
    keep = cols >= 0
    P = sp.csr_matrix(
        (vals[keep], (rows[keep], cols[keep])), shape=((nf - 1) ** 2, (nc - 1) ** 2)
    )
    P.sort_indices()
    return P


def build_hierarchy(fine_mesh, w):
    n = fine_mesh.n_per_side
    if n < 4 or not is_power_of_two(n):
        raise ValueError(f"fine mesh must have a power-of-2 side count >= 4, got {n}")
    sizes = []
    while n >= 2:
        sizes.append(n)
        n //= 2
    sizes.reverse()
    meshes = [build_mesh(s) if s != fine_mesh.n_per_side else fine_mesh for s in sizes]
    matrices = [assemble_weighted_stiffness(ms, w) for ms in meshes]
    prolongs = [prolongation(s) for s in sizes[:-1]]
    sweep = [_kernels.SweepData(A) for A in matrices]
    coarse = sla.lu_factor(matrices[0].toarray())
    return GridHierarchy(meshes, matrices, prolongs, sweep, coarse)


def _cycle(hier, level, B, X, nu_pre, nu_post):
    if level == 0:
        X[:] = sla.lu_solve(hier.coarse_factor, B)
        return
    sd = hier.sweep_data[level]
    _kernels.gs_forward(sd, B, X, nu_pre)
    R = B - sd.A @ X
    P = hier.prolongations[level - 1]
    Bc = np.ascontiguousarray(P.T @ R)
    Xc = np.zeros_like(Bc)
    _cycle(hier, level - 1, Bc, Xc, nu_pre, nu_post)
    X += P @ Xc
    _kernels.gs_backward(sd, B, X, nu_post)


def v_cycle(hier, b, x0=None, nu_pre=2, nu_post=2):
    """One V(nu_pre, nu_post) cycle; returns the updated iterate."""
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    B = np.ascontiguousarray(b.reshape(len(b), -1))
    if x0 is None:
        X = np.zeros_like(B)
    else:
        X = np.array(np.asarray(x0, dtype=float).reshape(B.shape), order="C", copy=True)
    _cycle(hier, hier.n_levels - 1, B, X, nu_pre, nu_post)
    return X.ravel() if vec else X


def energy_contraction(hier, n_iter=40, seed=0, nu_pre=2, nu_post=2):
    """Asymptotic A-norm contraction of the V-cycle error propagator.

    Power iteration on ``e <- e - V(A e)``; the propagator is A-self-adjoint for
    the symmetric cycle, so the ratio converges to its A-norm.
    """
    A = hier.fine_matrix
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(A.shape[0])
    e /= np.sqrt(e @ (A @ e))
    rho = 0.0
    for _ in range(n_iter):
        e = e - v_cycle(hier, A @ e, None, nu_pre, nu_post)
        nrm = np.sqrt(e @ (A @ e))
        rho = nrm
        e /= nrm
    return float(rho)
