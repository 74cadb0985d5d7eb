"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends run the same inputs; results must agree before timings print.
"""

from __future__ import annotations

import argparse
import random
import timeit

from gencons import _kernels_py
from gencons.config import majorities, of_size

try:
    from gencons import _kernels
except ImportError:
    _kernels = None


def _mask(q) -> int:
    return sum(1 << s for s in q)


def decision_inputs(rng: random.Random, n: int, rows: int, nvals: int, count: int):
    cases = []
    majority = [_mask(q) for q in majorities(range(n))]
    fast_q = [_mask(q) for q in of_size(range(n), (3 * n + 3) // 4)]
    for _ in range(count):
        nil, vals = [], []
        for _r in range(rows):
            owner = [rng.randrange(nvals + 2) for _s in range(n)]  # 0 unwritten, 1 nil
            nil.append(sum(1 << s for s, o in enumerate(owner) if o == 1))
            vals.append([sum(1 << s for s, o in enumerate(owner) if o == i + 2)
                         for i in range(nvals)])
        fast = [rng.random() < 0.5 for _r in range(rows)]
        quorums = [fast_q if f else majority for f in fast]
        cases.append((nil, vals, quorums, fast))
    return cases


def disjoint_inputs(rng: random.Random, n: int, sets: int, count: int):
    pool = [_mask(q) for q in of_size(range(n), n // 2)] + [_mask(q) for q in majorities(range(n))]
    return [[rng.sample(pool, min(len(pool), 6)) for _ in range(sets)] for _ in range(count)]


def run(mod, dcases, jcases):
    for c in dcases:
        mod.decision_codes(*c)
    for m in jcases:
        mod.first_disjoint(m)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    dcases = decision_inputs(rng, n=5, rows=4, nvals=2, count=2000)
    jcases = disjoint_inputs(rng, n=6, sets=3, count=2000)

    backends = [("python", _kernels_py)]
    if _kernels is None:
        print("compiled kernels not built; timing the Python fallback only")
    else:
        backends.append(("cython", _kernels))
        for c in dcases:
            assert _kernels.decision_codes(*c) == _kernels_py.decision_codes(*c)
        for m in jcases:
            assert _kernels.first_disjoint(m) == _kernels_py.first_disjoint(m)

    best = {}
    for name, mod in backends:
        t = min(timeit.repeat(lambda: run(mod, dcases, jcases), number=1, repeat=args.repeat))
        best[name] = t
        print(f"{name:7s} {t * 1e3:8.1f} ms  ({len(dcases)} tables, {len(jcases)} disjointness queries)")
    if len(best) == 2:
        print(f"speedup {best['python'] / best['cython']:.1f}x")


if __name__ == "__main__":
    main()
