"""Benchmark the compiled kernels against the NumPy/SciPy fallback.

Builds random graphs at a few sizes and times gather_sum, ppr_power, and
ppr_push on both backends. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--sizes 1000 5000 20000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from auglm._kernels import _fallback

try:
    from auglm._kernels import _compiled
except ImportError:
    _compiled = None


def random_graph(rng: np.random.Generator, n: int, avg_degree: int = 8):
    """Symmetric CSR adjacency with roughly avg_degree entries per row."""
    m = n * avg_degree // 2
    u = rng.integers(0, n, size=m)
    v = rng.integers(0, n, size=m)
    keep = u != v
    u, v = u[keep], v[keep]
    heads = np.concatenate([u, v])
    tails = np.concatenate([v, u])
    order = np.lexsort((tails, heads))
    heads, tails = heads[order], tails[order]
    counts = np.zeros(n, dtype=np.int64)
    np.add.at(counts, heads, 1)
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(counts)
    return offsets, tails.astype(np.int64)


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[1000, 5000, 20000])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--sources", type=int, default=20,
                        help="PPR source nodes per measurement.")
    args = parser.parse_args()

    backends = {"fallback": _fallback}
    if _compiled is not None:
        backends["compiled"] = _compiled
    else:
        print("compiled extension not built; timing the fallback only\n")

    rng = np.random.default_rng(0)
    header = f"{'kernel':<12} {'n':>8} " + "".join(f"{name:>12}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    for n in args.sizes:
        offsets, targets = random_graph(rng, n)
        h = rng.normal(size=(n, 64))
        sources = rng.integers(0, n, size=args.sources)

        cases = {
            "gather_sum": lambda impl: impl.gather_sum(offsets, targets, h),
            "ppr_power": lambda impl: [
                impl.ppr_power(offsets, targets, int(s), 0.1, 1e-10, 500) for s in sources
            ],
            "ppr_push": lambda impl: [
                impl.ppr_push(offsets, targets, int(s), 0.1, 1e-6) for s in sources
            ],
        }
        for kernel, call in cases.items():
            row = f"{kernel:<12} {n:>8} "
            timings = {}
            for name, impl in backends.items():
                timings[name] = best_of(lambda impl=impl: call(impl), args.repeats)
                row += f"{timings[name] * 1e3:>10.2f}ms"
            if len(timings) == 2:
                row += f"{timings['fallback'] / timings['compiled']:>9.1f}x"
            print(row)
        print()


if __name__ == "__main__":
    main()
