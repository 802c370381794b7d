"""Compare the compiled and pure-Python assignment kernels.

    python3 benchmarks/bench_assignment.py [--repeat N] [--seed S]

Times a single rectangular solve and a K-best Murty enumeration on
tracker-shaped cost matrices (n tracks x (m + 2n) columns, with the
missed and died blocks finite only on their diagonals).
"""
import argparse
import itertools
import timeit

import numpy as np

from mstrack.assignment import MurtyIterator, available_backends, munkres


def tracker_cost(rng, n, m, gate_prob=0.6):
    c = np.full((n, m + 2 * n), np.inf)
    gated = rng.random((n, m)) < gate_prob
    c[:, :m][gated] = rng.uniform(0.0, 10.0, gated.sum())
    idx = np.arange(n)
    c[idx, m + idx] = rng.uniform(2.0, 6.0, n)
    c[idx, m + n + idx] = rng.uniform(4.0, 8.0, n)
    return c


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=20, help="assignments drawn per Murty run")
    args = p.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernel not built; only the Python kernel is timed")
    rng = np.random.default_rng(args.seed)
    sizes = [(3, 5), (8, 12), (20, 30), (40, 50)]
    header = f"{'case':<16}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for n, m in sizes:
        mats = [tracker_cost(rng, n, m) for _ in range(20)]
        cases = {
            f"lsap {n}x{m}": lambda s: [munkres(c, s) for c in mats],
            f"murty {n}x{m}": lambda s: [list(itertools.islice(MurtyIterator(c, s), args.k))
                                         for c in mats[:2]],
        }
        for name, fn in cases.items():
            times = {b: min(timeit.repeat(lambda: fn(s), number=1, repeat=args.repeat))
                     for b, s in backends.items()}
            row = f"{name:<16}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
            if len(times) == 2:
                row += f"{times['python'] / times['cython']:>9.1f}x"
            print(row, flush=True)


if __name__ == "__main__":
    main()
