"""Matrix-free stochastic Galerkin operator ``A = sum_k G_k (x) K_k``.

Vectors are mode-major: a length ``N_xi * N_x`` array whose j-th contiguous
chunk of length ``N_x`` holds the spatial coefficients of chaos mode j.
Reshaped to ``(N_xi, N_x)``, the action of ``G (x) K`` is ``G @ V @ K^T``.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .gpc_basis import MultiIndexSet, StochasticMatrices, build_multi_index_set, build_stochastic_matrices
from .mesh_fem import assemble_load, assemble_weighted_stiffness

MAX_EXPLICIT_SIZE = 200_000


@dataclass(eq=False)
class SGOperator:
    K: list  # K[0] mean stiffness, K[k] = sqrt(lambda_k) b_k stiffness
    G: StochasticMatrices
    mis: MultiIndexSet
    mesh: object = None
    mean: float = 1.0
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.K) != len(self.G):
            raise ValueError("need as many stiffness matrices as stochastic matrices")
        if len(self.K) != self.mis.m + 1:
            raise ValueError("K/G count must equal m + 1")
        n_xi = self.mis.size
        for g in self.G.G:
            if g.shape != (n_xi, n_xi):
                raise ValueError("stochastic matrix shape does not match the index set")
        # (k, G_k restricted to grade d rows and grade e columns)
        self._coupling = {}
        for d in range(self.mis.p + 1):
            rows = self.mis.grade_slice(d)
            for e in (d - 1, d + 1):
                if 0 <= e <= self.mis.p:
                    cols = self.mis.grade_slice(e)
                    blocks = []
                    for k in range(1, len(self.G)):
                        sub = self.G[k][rows, cols]
                        if sub.nnz and self.K[k].nnz:
                            blocks.append((k, sub.tocsr()))
                    self._coupling[d, e] = blocks

    @property
    def m(self):
        return self.mis.m

    @property
    def p(self):
        return self.mis.p

    @property
    def n_x(self):
        return self.K[0].shape[0]

    @property
    def n_xi(self):
        return self.mis.size

    @property
    def shape(self):
        n = self.n_x * self.n_xi
        return (n, n)

    @property
    def split_point(self):
        return self.mis.split_point

    def chunks(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.shape[0],):
            raise ValueError(f"expected vector of length {self.shape[0]}, got shape {v.shape}")
        return v.reshape(self.n_xi, self.n_x)

    def apply(self, v):
        V = self.chunks(v)
        out = self.K[0] @ V.T  # G_0 = I
        out = out.T.copy()
        for k in range(1, len(self.K)):
            if self.K[k].nnz == 0 or self.G[k].nnz == 0:
                continue
            KV = (self.K[k] @ V.T).T
            out += self.G[k] @ KV
        return out.ravel()

    __matmul__ = apply

    def coupling_apply(self, d, e, Z_e):
        """``sum_k G_k[grade d, grade e] Z_e K_k^T`` for chunks ``Z_e`` of grade e."""
        nd = self.mis.grade_offsets[d + 1] - self.mis.grade_offsets[d]
        out = np.zeros((nd, self.n_x))
        for k, g in self._coupling[d, e]:
            out += g @ (self.K[k] @ Z_e.T).T
        return out

    def as_linear_operator(self):
        return LinearOperator(self.shape, matvec=self.apply, rmatvec=self.apply, dtype=float)

    def restricted(self, p_low):
        """Galerkin operator on the first ``basis_size(m, p_low)`` modes."""
        mis_low = build_multi_index_set(self.m, p_low)
        n = mis_low.size
        G_low = StochasticMatrices([g[:n, :n].tocsr() for g in self.G.G])
        return SGOperator(self.K, G_low, mis_low, self.mesh, self.mean)


def build_sg_operator(mesh, kl, mis):
    if kl.m != mis.m:
        raise ValueError(f"KL truncation m={kl.m} does not match index set m={mis.m}")
    K = [assemble_weighted_stiffness(mesh, kl.mean)]
    for k in range(kl.m):
        K.append(assemble_weighted_stiffness(mesh, kl.weight(k)))
    G = build_stochastic_matrices(mis)
    return SGOperator(K, G, mis, mesh, kl.mean)


def build_rhs(mesh, mis, f):
    """Deterministic forcing only loads the constant mode."""
    b = np.zeros((mis.size, mesh.n_interior))
    b[0] = assemble_load(mesh, f)
    return b.ravel()


class BlockViews(NamedTuple):
    A_hat: SGOperator
    W: LinearOperator
    Wt: LinearOperator
    D: LinearOperator


def block_views(op):
    """2x2 hierarchical partition at the last grade.

    ``D`` acts as ``I (x) K_0``: modes of equal total degree never couple
    through any G_k, and G_0 is the identity.
    """
    if op.p < 1:
        raise ValueError("hierarchical split needs p >= 1")
    nx, s, n_xi = op.n_x, op.split_point, op.n_xi
    n_lo, n_hi = s * nx, (n_xi - s) * nx
    top = op.p
    A_hat = op.restricted(op.p - 1)

    def w_mv(v1):
        Z = np.asarray(v1, dtype=float).reshape(s, nx)[op.mis.grade_slice(top - 1)]
        return op.coupling_apply(top, top - 1, Z).ravel()

    def wt_mv(v2):
        Z = np.asarray(v2, dtype=float).reshape(n_xi - s, nx)
        out = np.zeros((s, nx))
        out[op.mis.grade_slice(top - 1)] = op.coupling_apply(top - 1, top, Z)
        return out.ravel()

    def d_mv(v2):
        Z = np.asarray(v2, dtype=float).reshape(n_xi - s, nx)
        return (op.K[0] @ Z.T).T.ravel()

    W = LinearOperator((n_hi, n_lo), matvec=w_mv, rmatvec=wt_mv, dtype=float)
    Wt = LinearOperator((n_lo, n_hi), matvec=wt_mv, rmatvec=w_mv, dtype=float)
    D = LinearOperator((n_hi, n_hi), matvec=d_mv, rmatvec=d_mv, dtype=float)
    return BlockViews(A_hat, W, Wt, D)


def assemble_explicit(op, max_size=MAX_EXPLICIT_SIZE):
    n = op.shape[0]
    if n > max_size:
        raise ValueError(f"explicit assembly refused for N={n} > {max_size}")
    A = sp.kron(op.G[0], op.K[0], format="csr")
    for k in range(1, len(op.K)):
        if op.G[k].nnz and op.K[k].nnz:
            A = A + sp.kron(op.G[k], op.K[k], format="csr")
    A = A.tocsr()
    A.sort_indices()
    return A


def structure_summary(m, p, n_per_side, K=None):
    """Sizes (and, with stiffness matrices, nonzero counts) without forming A.

    Off-diagonal mode blocks involve exactly one G_k, diagonal blocks only K_0,
    so nonzeros are sums of ``nnz(K_k)`` over the G sparsity patterns.
    """
    mis = build_multi_index_set(m, p)
    n_x = (n_per_side - 1) ** 2
    s = mis.split_point
    out = {
        "N_xi": mis.size,
        "N_x": n_x,
        "A": mis.size * n_x,
        "A_hat": s * n_x,
        "D": (mis.size - s) * n_x,
        "W": ((mis.size - s) * n_x, s * n_x),
    }
    if K is not None:
        G = build_stochastic_matrices(mis)
        nnz0 = K[0].nnz
        diag_lo = s * nnz0
        diag_hi = (mis.size - s) * nnz0
        off_lo = off_w = 0
        for k in range(1, m + 1):
            gk = G[k].tocoo()
            lo = (gk.row < s) & (gk.col < s)
            w = (gk.row >= s) & (gk.col < s)
            off_lo += int(lo.sum()) * K[k].nnz
            off_w += int(w.sum()) * K[k].nnz
        out["nnz"] = {
            "A": diag_lo + diag_hi + off_lo + 2 * off_w,
            "A_hat": diag_lo + off_lo,
            "W": off_w,
            "D": diag_hi,
            "B_D": mis.size * nnz0,
        }
    return out
