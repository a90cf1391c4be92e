"""Time the numba kernels against their pure-numpy twins on one 320x320 plane.

    python3 benchmarks/bench_kernels.py [--size 320] [--repeat 5]

Also checks that both paths agree, so a speedup never hides a divergence.
"""

import argparse
import time

import numpy as np

from morphdetect import kernels
from morphdetect._accel import HAVE_NUMBA
from morphdetect.features import default_filterbank


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=320)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    plane = np.random.default_rng(args.seed).random((args.size, args.size))
    filters = default_filterbank()
    padded = kernels.pad_reflect101(plane, filters.shape[1] // 2)

    cases = [
        ("lbp", lambda: kernels.lbp_codes_np(plane), lambda: kernels.lbp_codes_nb(plane)),
        ("bsif", lambda: kernels.bsif_codes_np(padded, filters), lambda: kernels.bsif_codes_nb(padded, filters)),
        ("hog_cells", lambda: kernels.hog_cells_np(plane), lambda: kernels.hog_cells_nb(plane)),
    ]
    print(f"{args.size}x{args.size} plane, best of {args.repeat}")
    print(f"{'kernel':<10} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}  max|diff|")
    for name, f_np, f_nb in cases:
        f_nb()  # compile (or load from cache) outside the timing
        t_np, r_np = best_of(f_np, args.repeat)
        t_nb, r_nb = best_of(f_nb, args.repeat)
        diff = np.max(np.abs(r_np.astype(np.float64) - r_nb.astype(np.float64)))
        print(f"{name:<10} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:7.1f}x  {diff:.3g}")


if __name__ == "__main__":
    main()
