"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N time for each backend and
the speed-up. Both backends are checked for equal results first.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from tile360 import _kernels


def workloads(rng):
    r, v = rng.normal(size=2000), rng.normal(size=2000)
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 2.0, 299))])
    rates = rng.uniform(0.5, 20.0, 300)
    period = float(times[-1] + (times[-1] - times[-2]))
    pts = rng.normal(size=(5000, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    cen = pts[:64].copy()
    return {
        "discounted_returns (T=2000)": lambda k: k.discounted_returns(r, 0.5, 0.99),
        "gae (T=2000)": lambda k: k.gae(r, v, 0.5, 0.99, 0.95),
        "download_time (300-step trace, 200 Mb)": lambda k: k.download_time(200.0, times, rates, period, 17.3),
        "assign_nearest (5000 pts, K=64)": lambda k: k.assign_nearest(pts, cen),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args(argv)
    c, p = _kernels.compiled_backend, _kernels.python_backend
    if c is None:
        print("compiled backend not built (pip install -e . --no-build-isolation); nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<42}{'compiled':>12}{'python':>12}{'speed-up':>10}")
    for name, fn in workloads(rng).items():
        a, b = np.asarray(fn(c)), np.asarray(fn(p))
        if not np.allclose(a, b, rtol=0, atol=1e-9):
            raise SystemExit(f"{name}: backends disagree")
        tc = min(timeit.repeat(lambda: fn(c), number=args.number, repeat=args.repeat)) / args.number
        tp = min(timeit.repeat(lambda: fn(p), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:<42}{tc * 1e6:>10.1f}us{tp * 1e6:>10.1f}us{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
