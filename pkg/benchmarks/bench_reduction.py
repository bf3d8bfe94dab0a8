"""Compare the compiled and pure-Python boundary-reduction kernels.

    python3 benchmarks/bench_reduction.py [--sizes 32 64 128] [--levels 256] [--repeat 3]

Both kernels reduce the same boundary matrices; the script checks that their
pairings agree and prints the best-of-``repeat`` wall time for each size.
"""
import argparse
import time

import numpy as np

from chctopo import _reduce_py
from chctopo.chc import ChcParams, simulate
from chctopo.cubical import boundary_matrix, build_filtration
from chctopo.field import LevelQuantizer, ScalarField2D, quantize

try:
    from chctopo._reduce import reduce_boundary as compiled
except ImportError:
    compiled = None


def fields(n, levels, rng):
    q = LevelQuantizer(-1, 1, levels)
    noise = ScalarField2D(rng.uniform(-1, 1, (n, n)))
    p = ChcParams(epsilon=0.01, K=min(64, n), steps=400, seed=int(rng.integers(1 << 30)))
    (chc,) = simulate(p, [p.endtime], n)
    return {"noise": quantize(noise, q), "chc": quantize(chc, q)}


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--levels", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'field':>6} {'n':>5} {'cells':>8} {'python s':>10} {'compiled s':>11} {'speedup':>8}")
    for n in args.sizes:
        for name, f in fields(n, args.levels, rng).items():
            _, indptr, indices, dims = boundary_matrix(build_filtration(f))
            t_py, ref = best_of(_reduce_py.reduce_boundary, (indptr, indices, dims), args.repeat)
            if compiled is None:
                print(f"{name:>6} {n:>5} {len(dims):>8} {t_py:>10.4f} {'n/a':>11} {'':>8}")
                continue
            t_c, out = best_of(compiled, (indptr, indices, dims), args.repeat)
            assert all(np.array_equal(a, b) for a, b in zip(ref, out)), "kernels disagree"
            print(f"{name:>6} {n:>5} {len(dims):>8} {t_py:>10.4f} {t_c:>11.4f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
