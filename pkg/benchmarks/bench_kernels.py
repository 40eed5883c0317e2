"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--T 518400] [--K 274] [--repeat 3]
"""
import argparse
import math
import time

import numpy as np

from bbmeld import BiasBasis, _backend
from bbmeld.engine import MeldConfig, meld
from bbmeld.simulation import make_bench_instance, simulate_trip


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(T, K, Q, rng):
    idx = np.unique(np.concatenate(([0], np.sort(rng.choice(np.arange(1, T - 1), K - 2, replace=False)), [T - 1])))
    x = np.cumsum(rng.normal(size=T))
    mean = rng.normal(size=(len(idx) - 1, Q + 2))
    A = rng.normal(size=(len(idx) - 1, Q + 2, Q + 2))
    cov = A @ np.transpose(A, (0, 2, 1))
    z = rng.normal(size=T - 1)
    de, dn = rng.normal(0, 0.01, T - 1), rng.normal(0, 0.01, T - 1)
    buf = [np.zeros(T) for _ in range(4)]

    def segments(mod):
        mod.segment_moments(x, idx.astype(np.int64), mean, cov, 0.4, 0.05, Q, 0.0, True, buf[0], buf[1])

    def bridge(mod):
        mod.bridge_sequential(z, 0.0, 1.0, 0.1, buf[2])

    def unproject(mod):
        mod.unproject_steps(de, dn, math.radians(40.0), math.radians(-70.0), 6371.0, buf[2], buf[3])

    return {"segment_moments": segments, "bridge_sequential": bridge, "unproject_steps": unproject}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=518_400)
    ap.add_argument("--K", type=int, default=274)
    ap.add_argument("--Q", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _backend.compiled_kernels is None:
        raise SystemExit("compiled kernels are not built; run pip install --no-build-isolation -e .")
    rng = np.random.default_rng(0)
    cases = kernel_cases(args.T, args.K, args.Q, rng)
    print(f"{'kernel':<20}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in cases.items():
        c = best_of(lambda: fn(_backend.compiled_kernels), args.repeat)
        p = best_of(lambda: fn(_backend.python_kernels), args.repeat)
        print(f"{name:<20}{c:>12.4f}{p:>12.4f}{p / c:>10.1f}")

    _, x, y = simulate_trip(make_bench_instance("trip1", 0, beta=(0.5, 3.0, -2.0)))
    cfg = MeldConfig(q_order=args.Q)
    before = _backend.BACKEND
    res = {}
    for name in ("compiled", "python"):
        _backend.use(name)
        res[name] = best_of(lambda: meld(x, y, BiasBasis(args.Q), cfg), 1)
    _backend.use(before)
    print(f"{'meld trip1':<20}{res['compiled']:>12.4f}{res['python']:>12.4f}{res['python'] / res['compiled']:>10.1f}")


if __name__ == "__main__":
    main()
