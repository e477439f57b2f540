"""Compare the numba and numpy Gauss-Seidel backends.

Times single smoothing sweeps on the fine-grid Laplacian, batched over
several right-hand side counts, and one full V(2,2) cycle per backend.

    python3 benchmarks/bench_kernels.py [--n 128] [--repeat 5]
"""

import argparse
import time

import numpy as np

from sgfem import _kernels
from sgfem.mesh_fem import build_mesh
from sgfem.multigrid import build_hierarchy, v_cycle


def best_of(fn, repeat):
    t = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        t.append(time.perf_counter() - t0)
    return min(t)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128, help="cells per side of the fine grid")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--nrhs", type=int, nargs="+", default=[1, 15, 70])
    args = ap.parse_args(argv)

    H = build_hierarchy(build_mesh(args.n), 1.0)
    sd = H.sweep_data[-1]
    N = H.fine_matrix.shape[0]
    rng = np.random.default_rng(0)
    print(f"fine grid 1/{args.n}: {N} unknowns, {H.n_levels} levels, numba available: {_kernels.HAVE_NUMBA}")

    # compile outside the timed region
    _kernels.gs_forward_numba(sd, np.zeros((N, 1)), np.zeros((N, 1)))
    _kernels.gs_backward_numba(sd, np.zeros((N, 1)), np.zeros((N, 1)))

    print(f"{'kernel':<22}{'nrhs':>6}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}")
    for nrhs in args.nrhs:
        B = rng.standard_normal((N, nrhs))
        for name in ("forward", "backward"):
            f_nb = getattr(_kernels, f"gs_{name}_numba")
            f_np = getattr(_kernels, f"gs_{name}_numpy")
            X1, X2 = np.zeros((N, nrhs)), np.zeros((N, nrhs))
            t_nb = best_of(lambda: f_nb(sd, B, X1), args.repeat)
            t_np = best_of(lambda: f_np(sd, B, X2), args.repeat)
            print(f"{'gs_' + name:<22}{nrhs:>6}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>9.1f}")

    prev = _kernels.backend()
    try:
        for nrhs in args.nrhs:
            B = rng.standard_normal((N, nrhs))
            times = {}
            for be in ("numba", "numpy"):
                _kernels.set_backend(be)
                times[be] = best_of(lambda: v_cycle(H, B), args.repeat)
            print(f"{'v_cycle(2,2)':<22}{nrhs:>6}{1e3 * times['numba']:>12.2f}{1e3 * times['numpy']:>12.2f}{times['numpy'] / times['numba']:>9.1f}")
    finally:
        _kernels.set_backend(prev)


if __name__ == "__main__":
    main()
