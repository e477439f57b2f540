"""Point Gauss-Seidel sweeps on CSR matrices, batched over right-hand sides.

Two implementations share one signature: a numba ``@njit`` kernel and a
scipy fallback built on sparse triangular solves.  The numba path is used
unless ``SGFEM_DISABLE_NUMBA`` is set to a truthy value (or numba cannot be
imported).  Both operate in place on ``X`` of shape ``(n, nrhs)``.
"""
import os

import numpy as np
from scipy.sparse.linalg import spsolve_triangular

_FLAG = os.environ.get("SGFEM_DISABLE_NUMBA", "").strip().lower()
DISABLE_NUMBA = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLE_NUMBA


def _gs_forward_py(indptr, indices, data, diag, B, X):
    n, nrhs = X.shape
    acc = np.empty(nrhs)
    for i in range(n):
        for c in range(nrhs):
            acc[c] = B[i, c]
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j != i:
                a = data[jj]
                for c in range(nrhs):
                    acc[c] -= a * X[j, c]
        d = diag[i]
        for c in range(nrhs):
            X[i, c] = acc[c] / d


def _gs_backward_py(indptr, indices, data, diag, B, X):
    n, nrhs = X.shape
    acc = np.empty(nrhs)
    for i in range(n - 1, -1, -1):
        for c in range(nrhs):
            acc[c] = B[i, c]
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j != i:
                a = data[jj]
                for c in range(nrhs):
                    acc[c] -= a * X[j, c]
        d = diag[i]
        for c in range(nrhs):
            X[i, c] = acc[c] / d


if HAVE_NUMBA:
    _gs_forward_nb = numba.njit(cache=True)(_gs_forward_py)
    _gs_backward_nb = numba.njit(cache=True)(_gs_backward_py)
else:  # pragma: no cover
    _gs_forward_nb = _gs_forward_py
    _gs_backward_nb = _gs_backward_py


class SweepData:
    """Per-matrix data needed by both sweep implementations.

    The triangular parts are only built for the scipy path.
    """

    def __init__(self, A):
        A = A.tocsr()
        A.sort_indices()
        self.A = A
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.data = A.data.astype(np.float64)
        self.diag = A.diagonal().astype(np.float64)
        if np.any(self.diag <= 0.0):
            raise ValueError("Gauss-Seidel needs a positive diagonal")
        self._lower = None
        self._upper = None

    @property
    def lower(self):
        if self._lower is None:
            from scipy.sparse import tril

            self._lower = tril(self.A, format="csr")
        return self._lower

    @property
    def upper(self):
        if self._upper is None:
            from scipy.sparse import triu

            self._upper = triu(self.A, format="csr")
        return self._upper


def gs_forward_numba(sd, B, X, sweeps=1):
    for _ in range(sweeps):
        _gs_forward_nb(sd.indptr, sd.indices, sd.data, sd.diag, B, X)


def gs_backward_numba(sd, B, X, sweeps=1):
    for _ in range(sweeps):
        _gs_backward_nb(sd.indptr, sd.indices, sd.data, sd.diag, B, X)


def gs_forward_numpy(sd, B, X, sweeps=1):
    # one forward sweep is x <- x + (D + L)^{-1} (b - A x)
    for _ in range(sweeps):
        X += spsolve_triangular(sd.lower, B - sd.A @ X, lower=True)


def gs_backward_numpy(sd, B, X, sweeps=1):
    for _ in range(sweeps):
        X += spsolve_triangular(sd.upper, B - sd.A @ X, lower=False)


_BACKENDS = {
    "numba": (gs_forward_numba, gs_backward_numba),
    "numpy": (gs_forward_numpy, gs_backward_numpy),
}
_active = "numba" if USE_NUMBA else "numpy"
gs_forward, gs_backward = _BACKENDS[_active]


def backend():
    """Name of the active sweep implementation."""
    return _active


def set_backend(name):
    """Switch the sweeps used by the multigrid smoother; returns the previous name."""
    global gs_forward, gs_backward, _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    prev = _active
    _active = name
    gs_forward, gs_backward = _BACKENDS[name]
    return prev
