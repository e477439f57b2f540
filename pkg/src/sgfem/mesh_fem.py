"""Uniform P1 triangulation of the square (-0.5, 0.5)^2 and FE assembly.

Each square cell is cut along its lower-left to upper-right diagonal.
Global nodes are numbered lexicographically by (y, x); interior nodes keep
that order.  Boundary rows and columns are eliminated at assembly time, so
every matrix returned here acts on interior coefficients only.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DOMAIN = (-0.5, 0.5)


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Mesh:
    n_per_side: int
    node_coords: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_tri, 3), counter-clockwise
    interior_nodes: np.ndarray  # global ids of interior nodes, (y, x) lexicographic
    global_to_interior: np.ndarray  # -1 on boundary nodes

    @property
    def h(self):
        return 1.0 / self.n_per_side

    @property
    def n_interior(self):
        return len(self.interior_nodes)

    @property
    def interior_coords(self):
        return self.node_coords[self.interior_nodes]

    def centroids(self):
        return self.node_coords[self.triangles].mean(axis=1)

    def signed_areas(self):
        p = self.node_coords[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_mesh(n_per_side):
    """Uniform mesh with ``n_per_side`` sub-intervals per side.

    ``n_per_side`` must be a power of two, at least 2, so that the mesh sits
    at the top of a nested multigrid hierarchy.
    """
    n = int(n_per_side)
    if n != n_per_side or n < 2 or not is_power_of_two(n):
        raise ValueError(f"n_per_side must be a power of 2 and >= 2, got {n_per_side!r}")
    lo, hi = DOMAIN
    h = (hi - lo) / n
    idx = np.arange(n + 1)
    # exact multiples of h, so the corners land on +-0.5 exactly
    coords1d = lo + idx * h
    coords1d[-1] = hi
    X, Y = np.meshgrid(coords1d, coords1d)  # row j is y_j
    node_coords = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (n + 1) + i

    ii, jj = np.meshgrid(np.arange(n), np.arange(n))
    ii = ii.ravel()
    jj = jj.ravel()
    ll = nid(ii, jj)
    lr = nid(ii + 1, jj)
    ur = nid(ii + 1, jj + 1)
    ul = nid(ii, jj + 1)
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    I, J = np.meshgrid(np.arange(1, n), np.arange(1, n))
    interior = nid(I.ravel(), J.ravel()).astype(np.int64)
    g2i = -np.ones((n + 1) ** 2, dtype=np.int64)
    g2i[interior] = np.arange(len(interior))
    return Mesh(n, node_coords, triangles, interior, g2i)


def _as_field_values(w, pts):
    if callable(w):
        vals = np.asarray(w(pts[:, 0], pts[:, 1]), dtype=float)
        return np.broadcast_to(vals, (len(pts),))
    return np.full(len(pts), float(w))


def p1_gradients(mesh):
    """Constant gradients of the three local basis functions, (n_tri, 3, 2)."""
    p = mesh.node_coords[mesh.triangles]
    area2 = 2.0 * mesh.signed_areas()
    # grad phi_a = rot90(p_c - p_b) / (2 area) for (a, b, c) cyclic
    grads = np.empty((len(p), 3, 2))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        e = p[:, c] - p[:, b]
        grads[:, a, 0] = -e[:, 1] / area2
        grads[:, a, 1] = e[:, 0] / area2
    return grads


def _interior_coo(mesh, local):
    """Scatter (n_tri, 3, 3) local matrices into an interior-only CSR matrix."""
    tri = mesh.global_to_interior[mesh.triangles]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = mesh.n_interior
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def assemble_weighted_stiffness(mesh, w):
    """Stiffness matrix of ``int w grad(phi_s) . grad(phi_r)``.

    ``w`` is a constant or a callable ``w(x, y)`` on arrays; it is sampled at
    triangle centroids (one-point rule).
    """
    grads = p1_gradients(mesh)
    area = mesh.signed_areas()
    wc = _as_field_values(w, mesh.centroids())
    local = np.einsum("tad,tbd->tab", grads, grads) * (area * wc)[:, None, None]
    return _interior_coo(mesh, local)


def assemble_load(mesh, f):
    """Load vector ``int f phi_r`` with the centroid rule on each triangle."""
    area = mesh.signed_areas()
    fc = _as_field_values(f, mesh.centroids())
    contrib = np.repeat((area * fc / 3.0)[:, None], 3, axis=1)
    tri = mesh.global_to_interior[mesh.triangles]
    keep = tri >= 0
    b = np.zeros(mesh.n_interior)
    np.add.at(b, tri[keep], contrib[keep])
    return b


def model_rhs(x, y):
    """Deterministic forcing 2 (0.5 - x^2 - y^2) used in the experiments."""
    return 2.0 * (0.5 - x * x - y * y)
