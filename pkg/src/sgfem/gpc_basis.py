"""Total-degree Legendre chaos on (-sqrt3, sqrt3)^m and its stochastic matrices.

Basis polynomials are orthonormal for the uniform density, ordered by total
degree (grade) and, within a grade, in descending lexicographic order of the
multi-index.  The first ``split_point`` indices therefore span the degree
``p - 1`` space.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SQRT3 = math.sqrt(3.0)
MAX_BASIS_SIZE = 2_000_000


def basis_size(m, p):
    return math.comb(m + p, p)


def _compositions(total, parts):
    """All tuples of ``parts`` non-negative ints summing to ``total``, descending lex."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    m: int
    p: int
    indices: np.ndarray  # (N_xi, m)
    grade_offsets: np.ndarray  # grade d occupies [offsets[d], offsets[d+1])
    lookup: dict = field(repr=False)

    @property
    def size(self):
        return len(self.indices)

    @property
    def split_point(self):
        return int(self.grade_offsets[self.p])

    def grade_slice(self, d):
        return slice(int(self.grade_offsets[d]), int(self.grade_offsets[d + 1]))

    def __len__(self):
        return self.size


def build_multi_index_set(m, p):
    if m < 1 or p < 0:
        raise ValueError("need m >= 1 and p >= 0")
    n = basis_size(m, p)
    if n > MAX_BASIS_SIZE:
        raise ValueError(f"basis size {n} exceeds limit {MAX_BASIS_SIZE}")
    rows = []
    offsets = [0]
    for d in range(p + 1):
        rows.extend(_compositions(d, m))
        offsets.append(len(rows))
    indices = np.array(rows, dtype=np.int64).reshape(-1, m)
    lookup = {tuple(r): i for i, r in enumerate(rows)}
    return MultiIndexSet(m, p, indices, np.array(offsets), lookup)


def recurrence_coefficient(d):
    """Off-diagonal Jacobi coefficient c_d = sqrt3 d / sqrt(4 d^2 - 1)."""
    return SQRT3 * d / math.sqrt(4.0 * d * d - 1.0)


def eval_1d_orthonormal_legendre(d, t):
    """Degree-d orthonormal Legendre polynomial for the uniform law on (-sqrt3, sqrt3)."""
    t = np.asarray(t, dtype=float)
    prev = np.zeros_like(t)
    cur = np.ones_like(t)
    for n in range(d):
        nxt = (t * cur - (recurrence_coefficient(n) if n > 0 else 0.0) * prev) / recurrence_coefficient(n + 1)
        prev, cur = cur, nxt
    return cur


def legendre_table(max_degree, t):
    """Array (max_degree + 1, len(t)) of all orthonormal polynomials up to max_degree."""
    t = np.asarray(t, dtype=float)
    out = np.empty((max_degree + 1, t.size))
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = t
    for n in range(1, max_degree):
        out[n + 1] = (t * out[n] - recurrence_coefficient(n) * out[n - 1]) / recurrence_coefficient(n + 1)
    return out


def gauss_uniform(n_points):
    """Gauss-Legendre rule for the density 1/(2 sqrt3) on (-sqrt3, sqrt3)."""
    x, w = np.polynomial.legendre.leggauss(n_points)
    return SQRT3 * x, 0.5 * w


def triple_product_table(p, n_points=None):
    """``T[a, b] = E[t pi_a(t) pi_b(t)]`` for a, b <= p by quadrature."""
    n_points = p + 2 if n_points is None else n_points
    t, w = gauss_uniform(n_points)
    P = legendre_table(p, t)
    return (P * (w * t)) @ P.T


@dataclass(frozen=True, eq=False)
class StochasticMatrices:
    G: list  # G[0] = identity, G[k] for k = 1..m; sparse CSR

    def __getitem__(self, k):
        return self.G[k]

    def __len__(self):
        return len(self.G)


def build_stochastic_matrices(mis):
    """Assemble G_0 and G_k = E[xi_k psi_i psi_j].

    The m-dimensional integral factorises over coordinates; only coordinate k
    contributes a non-trivial factor, nonzero when the indices differ by one
    there.  All other factors are norms of orthonormal polynomials (exactly 1).
    """
    n, m = mis.indices.shape
    T = triple_product_table(max(mis.p, 1))
    G = [sp.identity(n, format="csr")]
    for k in range(m):
        rows, cols, vals = [], [], []
        for i, alpha in enumerate(mis.indices):
            up = alpha.copy()
            up[k] += 1
            j = mis.lookup.get(tuple(up))
            if j is None:
                continue
            v = T[alpha[k], up[k]]
            rows += [i, j]
            cols += [j, i]
            vals += [v, v]
        G.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    for g in G:
        g.sort_indices()
    return StochasticMatrices(G)
