"""Compare the compiled and numpy weighted-Laplacian kernels.

    python benchmarks/bench_kernels.py --repeat 20
    GLUE_THREADS=4 python benchmarks/bench_kernels.py --sizes 512 1024

Prints one row per grid: best wall time of each backend, the speed-up, and
the largest absolute difference between the two results.
"""

import argparse
import time

import numpy as np

from gluebench import kernels


def best_time(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def case(shape, rng):
    u = rng.standard_normal(shape)
    w = []
    for a in range(len(shape)):
        s = list(shape)
        s[a] += 1
        w.append(rng.uniform(0.0, 1.0, s))
    return u, tuple(w), 1.0 / shape[0]


def compiled_call(u, w, h):
    mod = kernels._compiled
    n = kernels.thread_count()
    if u.ndim == 2:
        return lambda: mod.weighted_laplacian_2d(u, w[0], w[1], h, n)
    return lambda: mod.weighted_laplacian_3d(u, w[0], w[1], w[2], h, n)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512], help="2D grid edge lengths")
    ap.add_argument("--sizes3d", type=int, nargs="+", default=[32, 64], help="3D grid edge lengths")
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    if kernels._compiled is None:
        print("compiled extension not available; only the numpy backend can run")
    print(f"threads={kernels.thread_count()}")
    print(f"{'grid':>12} {'python [ms]':>12} {'cython [ms]':>12} {'speed-up':>9} {'max diff':>10}")
    shapes = [(n, n) for n in args.sizes] + [(n, n, n) for n in args.sizes3d]
    for shape in shapes:
        u, w, h = case(shape, rng)
        tp = best_time(lambda: kernels.weighted_laplacian_python(u, w, h), args.repeat)
        label = "x".join(map(str, shape))
        if kernels._compiled is None:
            print(f"{label:>12} {tp * 1e3:12.3f} {'-':>12} {'-':>9} {'-':>10}")
            continue
        call = compiled_call(u, w, h)
        tc = best_time(call, args.repeat)
        diff = float(np.max(np.abs(call() - kernels.weighted_laplacian_python(u, w, h))))
        print(f"{label:>12} {tp * 1e3:12.3f} {tc * 1e3:12.3f} {tp / tc:9.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
