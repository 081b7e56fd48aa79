"""Time the compiled and pure-Python scheduling kernels on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import random
import timeit

from edgespec.scheduler import _pykernels

try:
    from edgespec.scheduler import _ckernels
except ImportError:
    _ckernels = None


def _cases(seed: int, count: int):
    rng = random.Random(seed)
    return [(rng.randint(0, 200_000), rng.randint(1, 80_000), rng.randint(1, 80_000)) for _ in range(count)]


WORKLOADS = {
    "dp_table n=12": lambda k, cases: [k.dp_table(12, *c) for c in cases],
    "dp_table n=64": lambda k, cases: [k.dp_table(64, *c) for c in cases],
    "brute_force n=12": lambda k, cases: [k.brute_force(12, *c) for c in cases[:20]],
    "greedy n=64": lambda k, cases: [k.greedy(64, *c) for c in cases],
    "timeline_total n=64": lambda k, cases: [k.timeline_total((1, 9, 20, 40), 64, *c) for c in cases],
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--cases", type=int, default=200)
    args = ap.parse_args()
    cases = _cases(0, args.cases)
    backends = [_pykernels] + ([_ckernels] if _ckernels is not None else [])
    if _ckernels is None:
        print("compiled kernels not built; timing the pure-Python backend only")
    print(f"{'workload':<22}" + "".join(f"{k.BACKEND:>12}" for k in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in WORKLOADS.items():
        results = [fn(k, cases) for k in backends]
        if len(results) > 1 and results[0] != results[1]:
            raise SystemExit(f"{name}: backends disagree")
        times = [min(timeit.repeat(lambda k=k: fn(k, cases), number=1, repeat=args.repeat)) for k in backends]
        line = f"{name:<22}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) > 1:
            line += f"{times[0] / times[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
