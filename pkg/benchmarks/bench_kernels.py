"""Time the compiled kernels against their pure-Python counterparts.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from ksdl import _pykernels
from ksdl.dictionary import random_dictionary

try:
    from ksdl import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases(rng):
    d = random_dictionary(64, 128, rng).matrix
    g = np.ascontiguousarray(d.T @ d)
    b = d.T @ rng.standard_normal(64)
    absg = np.abs(g)
    score = np.ascontiguousarray(np.abs(rng.standard_normal((128, 128))))
    x0 = np.zeros(128)
    return {
        "cd_lasso_gram": lambda mod: mod.cd_lasso_gram(g, b, 0.1, x0, 1e-12, 500),
        "top_s_sums": lambda mod: mod.top_s_sums(absg, 8),
        "greedy_match": lambda mod: mod.greedy_match(score),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<16}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, call in cases.items():
        py = min(timeit.repeat(lambda: call(_pykernels), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{name:<16}{py * 1e3:>12.3f}{'n/a':>12}{'n/a':>10}")
            continue
        cy = min(timeit.repeat(lambda: call(_ckernels), number=1, repeat=args.repeat))
        print(f"{name:<16}{py * 1e3:>12.3f}{cy * 1e3:>12.3f}{py / cy:>10.1f}")


if __name__ == "__main__":
    main()
