"""Compare the compiled and numpy assignment kernels.

    python3 benchmarks/bench_kernels.py [--points 1000000] [--sites 2 4 8 16] [--repeat 3]

Prints the best-of-``repeat`` wall time per backend and checks that both
backends return bit-identical labels and power values.
"""
import argparse
import time

import numpy as np

from equipart import kernels


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--points", type=int, default=1_000_000)
    ap.add_argument("--sites", type=int, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    impls = kernels.backends()
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(args.points, args.dim))
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(sorted(impls))}")
    print(f"{'kernel':<12}{'sites':>6}" + "".join(f"{name:>12}" for name in sorted(impls)) + f"{'speedup':>10}")
    for t in args.sites:
        s = rng.uniform(size=(t, args.dim))
        w = rng.normal(scale=0.05, size=t)
        for kernel in ("assign", "assign_pair"):
            fn = getattr(kernels, kernel)
            timings, outputs = {}, {}
            for name in sorted(impls):
                timings[name], outputs[name] = best_time(lambda: fn(x, s, w, impl=impls[name]), args.repeat)
            if len(outputs) > 1:
                ref = outputs["python"]
                for name, out in outputs.items():
                    if any(a.tobytes() != b.tobytes() for a, b in zip(ref, out)):
                        raise SystemExit(f"{name} disagrees with python on {kernel} t={t}")
            speed = timings["python"] / timings["cython"] if "cython" in timings else float("nan")
            cells = "".join(f"{timings[name]:>11.4f}s" for name in sorted(impls))
            print(f"{kernel:<12}{t:>6}{cells}{speed:>9.1f}x")


if __name__ == "__main__":
    main()
