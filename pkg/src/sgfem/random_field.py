"""Truncated Karhunen-Loeve expansion for the exponential covariance.

The 2D kernel is taken in separable form
``sigma^2 exp(-(|x1 - y1| + |x2 - y2|) / L)`` on (-0.5, 0.5)^2, so its
eigenpairs are products of the analytic 1D eigenpairs of
``exp(-|s - t| / L)`` on (-0.5, 0.5).
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import bisect

SQRT3 = math.sqrt(3.0)


class KLMode1D(NamedTuple):
    eigenvalue: float
    frequency: float
    normalization: float
    parity: str  # "even" -> cos, "odd" -> sin

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.parity == "even":
            return np.cos(self.frequency * s) / self.normalization
        return np.sin(self.frequency * s) / self.normalization


def _even_eq(w, L):
    # tan(w/2) = 1/(L w), written without the poles of tan
    return L * w * math.sin(0.5 * w) - math.cos(0.5 * w)


def _odd_eq(w, L):
    # tan(w/2) = -L w
    return math.sin(0.5 * w) + L * w * math.cos(0.5 * w)


def solve_kl_1d(L, n_terms):
    """First ``n_terms`` eigenpairs of ``exp(-|s-t|/L)`` on (-0.5, 0.5).

    The n-th root (1-based) lies in ((n-1) pi, n pi); odd n are cosine modes,
    even n are sine modes.  Eigenvalues come out in descending order.
    """
    if not L > 0:
        raise ValueError(f"correlation length must be positive, got {L!r}")
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    modes = []
    for n in range(1, n_terms + 1):
        a, b = (n - 1) * math.pi, n * math.pi
        if n % 2 == 1:
            eq, parity = _even_eq, "even"
        else:
            eq, parity = _odd_eq, "odd"
        w = bisect(eq, a, b, args=(L,), xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
        lam = 2.0 * L / (1.0 + (L * w) ** 2)
        if parity == "even":
            nrm = math.sqrt(0.5 + math.sin(w) / (2.0 * w))
        else:
            nrm = math.sqrt(0.5 - math.sin(w) / (2.0 * w))
        modes.append(KLMode1D(lam, w, nrm, parity))
    return modes


@dataclass(frozen=True, eq=False)
class KLExpansion:
    mean: float
    sigma: float
    corr_length: float
    m: int
    eigenvalues: np.ndarray
    pairs: tuple  # (i, j) indices into modes_1d for each 2D term
    modes_1d: tuple = field(repr=False)

    def eigenfunction(self, k, x, y):
        """Value of the k-th (0-based) 2D eigenfunction at points (x, y)."""
        i, j = self.pairs[k]
        return self.modes_1d[i](x) * self.modes_1d[j](y)

    def weight(self, k):
        """Field ``sqrt(lambda_k) b_k`` used to assemble the k-th stiffness matrix."""
        s = math.sqrt(self.eigenvalues[k])
        return lambda x, y: s * self.eigenfunction(k, x, y)

    def eval_coefficient(self, x, y, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.m,):
            raise ValueError(f"xi must have length {self.m}, got shape {xi.shape}")
        a = np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(self.mean))
        for k in range(self.m):
            if xi[k] != 0.0:
                a = a + math.sqrt(self.eigenvalues[k]) * self.eigenfunction(k, x, y) * xi[k]
        return a

    def captured_variance_fraction(self):
        if self.sigma == 0:
            return 1.0
        return float(np.sum(self.eigenvalues) / self.sigma**2)

    def sup_norms(self, n_grid=129):
        """Grid estimate of ``max |b_k|`` on the closed square."""
        g = np.linspace(-0.5, 0.5, n_grid)
        out = np.empty(self.m)
        for k, (i, j) in enumerate(self.pairs):
            # separable, so the 2D max is a product of 1D maxima
            out[k] = np.max(np.abs(self.modes_1d[i](g))) * np.max(np.abs(self.modes_1d[j](g)))
        return out

    def coefficient_bounds(self, n_grid=65, support=SQRT3):
        """Min and max of ``a_m(x, xi)`` over a grid and all of [-s, s]^m.

        ``a_m`` is affine in xi, so the extremes over the box sit at vertices
        and equal ``mean -/+ s * sum_k |sqrt(lambda_k) b_k(x)|``.
        """
        g = np.linspace(-0.5, 0.5, n_grid)
        X, Y = np.meshgrid(g, g)
        spread = np.zeros_like(X)
        for k in range(self.m):
            spread += np.abs(math.sqrt(self.eigenvalues[k]) * self.eigenfunction(k, X, Y))
        return float(np.min(self.mean - support * spread)), float(np.max(self.mean + support * spread))


def build_kl_2d(mean, sigma, L, m):
    if not mean > 0:
        raise ValueError("mean must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if not 1 <= m <= 64:
        raise ValueError("m must be in [1, 64]")
    n1d = math.ceil(math.sqrt(4 * m)) + 4
    while True:
        modes = solve_kl_1d(L, n1d)
        lam1 = np.array([md.eigenvalue for md in modes])
        cand = [(lam1[i] * lam1[j], i, j) for i in range(n1d) for j in range(n1d)]
        # stable sort: ties (i, j) / (j, i) keep row-major order
        cand.sort(key=lambda c: -c[0])
        # every pair involving the last 1D mode is below lam1[0]*lam1[-1];
        # the pool is adequate when the m-th pick is above that
        if cand[m - 1][0] > lam1[0] * lam1[-1] or n1d > 400:
            break
        n1d *= 2
    top = cand[:m]
    eig = sigma**2 * np.array([c[0] for c in top])
    pairs = tuple((c[1], c[2]) for c in top)
    return KLExpansion(float(mean), float(sigma), float(L), int(m), eig, pairs, tuple(modes))
