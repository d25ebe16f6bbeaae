#!/usr/bin/env python3
"""Time the numba-compiled kernels against the plain-Python fallback.

The package selects the compiled path automatically; ``PCR_DISABLE_NUMBA=1``
forces the fallback at import time. This script loads both implementations in
one process (the undecorated functions stay importable) and prints a table.

Usage: python benchmarks/bench_kernels.py [--pairs 2000] [--repeat 5]
"""

import argparse
import time

import numpy as np

from pcr import kernels
from pcr.icpcov import rotation_derivatives


def timeit(func, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    pts_p = np.ascontiguousarray(rng.normal(size=(args.pairs, 3)))
    pts_q = np.ascontiguousarray(rng.normal(size=(args.pairs, 3)))
    rot, drot, ddrot = rotation_derivatives(0.3, -0.2, 0.9)
    trans = np.array([0.1, -0.4, 0.2])
    rays_s = rng.normal(size=(args.pairs, 3))
    rays_s /= np.linalg.norm(rays_s, axis=1, keepdims=True)
    rays_t = rng.normal(size=(args.pairs, 3))
    rays_t /= np.linalg.norm(rays_t, axis=1, keepdims=True)
    ematrix = rng.normal(size=(3, 3))

    cases = [
        ("hessian_xx_accum", kernels.hessian_xx_accum,
         kernels._py_hessian_xx_accum, (pts_p, pts_q, rot, trans, drot, ddrot)),
        ("hessian_zx_accum", kernels.hessian_zx_accum,
         kernels._py_hessian_zx_accum, (pts_p, pts_q, rot, trans, drot)),
        ("epipolar_residuals", kernels.epipolar_residuals,
         kernels._py_epipolar_residuals, (ematrix, rays_s, rays_t)),
    ]

    if not kernels.NUMBA_ENABLED:
        print("numba disabled or unavailable; timing the fallback only\n")

    print(f"{args.pairs} pairs, best of {args.repeat} runs\n")
    print(f"{'kernel':<22}{'python (ms)':>14}{'numba (ms)':>14}{'speedup':>10}")
    for name, fast, plain, case_args in cases:
        t_plain = timeit(plain, case_args, args.repeat) * 1e3
        if kernels.NUMBA_ENABLED:
            fast(*case_args)  # compile outside the timed region
            t_fast = timeit(fast, case_args, args.repeat) * 1e3
            print(f"{name:<22}{t_plain:>14.3f}{t_fast:>14.3f}{t_plain / t_fast:>9.1f}x")
        else:
            print(f"{name:<22}{t_plain:>14.3f}{'-':>14}{'-':>10}")


if __name__ == "__main__":
    main()
