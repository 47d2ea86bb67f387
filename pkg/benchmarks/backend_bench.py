"""Time the numba kernels against their pure-numpy twins.

Both backend modules are imported directly, so this is independent of the
MLSIBM_BACKEND selection.  Numba functions are called once before timing to
keep compilation out of the numbers.

Run:  python benchmarks/backend_bench.py [--cells 48] [--markers 4000]
"""

import argparse
import time

import numpy as np

from mlsibm.grid import build_grid
from mlsibm.kernels import numba_backend, numpy_backend


def median_time(fn, reps):
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return float(np.median(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", type=int, default=48, help="cells per axis (3D)")
    ap.add_argument("--markers", type=int, default=4000)
    ap.add_argument("--reps", type=int, default=11)
    args = ap.parse_args()

    rng = np.random.default_rng(7)
    n = args.cells
    grid = build_grid((n, n, n), 1.0 / n, periodic=(True, True, True))
    lat = grid.lattice(0)
    X = rng.uniform(0.0, 1.0, size=(args.markers, 3))

    gshape = lat.gshape(1)
    q = rng.standard_normal(gshape)
    u, v, w = (rng.standard_normal(gshape) for _ in range(3))

    mls_args = (X, lat.offs, lat.counts, lat.periodic, lat.h, lat.H,
                2.0 / 3.0, 1, 1)
    phi, flat, _, _, _ = numpy_backend.mls_build_3d(*mls_args)
    src = rng.standard_normal(args.markers)

    nsys, m = 4096, n
    dl, dd, du = (rng.standard_normal(m) for _ in range(3))
    dd = dd + 8.0  # keep the system diagonally dominant
    rhs = rng.standard_normal((nsys, m))

    cases = [
        ("mls_build_3d", lambda b: b.mls_build_3d(*mls_args)),
        ("interp_flat", lambda b: b.interp_flat(q.ravel(), phi, flat)),
        ("spread_flat",
         lambda b: b.spread_flat(np.zeros(q.size), phi, flat, src)),
        ("conv_u_3d", lambda b: b.conv_u_3d(u, v, w, grid.h)),
        ("lap_3d", lambda b: b.lap_3d(q, grid.h)),
        ("div_3d", lambda b: b.div_3d(u, v, w, grid.h)),
        ("thomas_batch", lambda b: b.thomas_batch(dl, dd, du, rhs)),
    ]

    print(f"grid {n}^3, {args.markers} markers, median of {args.reps} reps")
    print(f"{'kernel':<14} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, call in cases:
        call(numba_backend)  # compile
        t_np = median_time(lambda: call(numpy_backend), args.reps)
        t_nb = median_time(lambda: call(numba_backend), args.reps)
        print(f"{name:<14} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
              f"{t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
