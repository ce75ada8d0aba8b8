"""Time the numeric kernels compiled with numba against the plain-Python fallback.

The fallback is measured in a child process started with
SURPLUS_AUCTIONS_NO_NUMBA=1, so helper kernels are not compiled either.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--seed 0]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def workloads(seed):
    from surplus_auctions import kernels
    from surplus_auctions.experiments import random_curve
    from surplus_auctions.valuations import DivisibleSeparable
    from surplus_auctions.welfare import curve_arrays

    rng = np.random.default_rng(seed)
    w = rng.exponential(size=(16, 4))
    caps = np.full(4, 4, dtype=np.int64)
    d = -np.sort(-rng.exponential(size=(16, 8)), axis=1)
    profile = [DivisibleSeparable(tuple(random_curve(rng) for _ in range(4))) for _ in range(8)]
    slopes, ends, nseg = curve_arrays(profile)
    return {
        "ud_vcg n=16 m=4 caps=4": lambda: kernels.ud_vcg(w, caps, 1e-9),
        "mu_vcg n=16 m=8 units=64": lambda: kernels.mu_vcg(d, 64, 8),
        "div_vcg n=8 m=4 q=1/4": lambda: kernels.div_vcg(slopes, ends, nseg, 0.25),
    }


def measure(repeat, seed):
    out = {}
    for name, fn in workloads(seed).items():
        fn()  # warm-up (and compilation)
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        out[name] = (time.perf_counter() - t0) / repeat
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.child:
        print(json.dumps(measure(args.repeat, args.seed)))
        return
    from surplus_auctions._accel import USE_NUMBA

    if not USE_NUMBA:
        sys.exit("numba is disabled in this environment; unset SURPLUS_AUCTIONS_NO_NUMBA")
    fast = measure(args.repeat, args.seed)
    env = dict(os.environ, SURPLUS_AUCTIONS_NO_NUMBA="1")
    child = subprocess.run(
        [sys.executable, __file__, "--child", "--repeat", str(args.repeat), "--seed", str(args.seed)],
        env=env, check=True, capture_output=True, text=True,
    )
    slow = json.loads(child.stdout)
    print(f"{'kernel':30s} {'numba ms':>10s} {'python ms':>10s} {'speedup':>8s}")
    for name in fast:
        print(f"{name:30s} {fast[name] * 1e3:10.3f} {slow[name] * 1e3:10.3f} {slow[name] / fast[name]:8.1f}x")


if __name__ == "__main__":
    main()
