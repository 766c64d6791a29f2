"""Benchmark the compiled matching kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_backends.py [--n 2000] [--draws 200]

Times the two hot kernels (nearest-neighbour selection and random
in-caliper selection) over repeated propensity draws, which is the inner
loop of the replicated study, and verifies both backends return identical
results while timing them.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bpsa import _matchpy

try:
    from bpsa import _matchcore
except ImportError:
    _matchcore = None


def _cases(n, draws, ratio, rng):
    out = []
    for _ in range(draws):
        lp = rng.normal(size=n)
        t = rng.integers(0, 2, size=n)
        t[:2] = [0, 1]
        lp_c = np.sort(lp[t == 0])
        lp_t = np.ascontiguousarray(lp[t == 1])
        width = 0.5 * lp.std(ddof=1)
        lo = np.searchsorted(lp_c, lp_t - width, side="left").astype(np.int64)
        hi = np.searchsorted(lp_c, lp_t + width, side="right").astype(np.int64)
        uniforms = rng.random((lp_t.shape[0], ratio))
        out.append((np.ascontiguousarray(lp_c), lp_t, lo, hi, uniforms))
    return out


def _time_backend(module, cases, ratio):
    t_nn = t_rand = 0.0
    checksum = 0
    for lp_c, lp_t, lo, hi, uniforms in cases:
        start = time.perf_counter()
        counts, _ = module.nn_match_counts(lp_c, lp_t, lo, hi, ratio)
        t_nn += time.perf_counter() - start
        checksum += int(counts.sum())
        start = time.perf_counter()
        counts, _ = module.random_match_counts(lp_c.shape[0], lo, hi, ratio, uniforms)
        t_rand += time.perf_counter() - start
        checksum += int(counts.sum())
    return t_nn, t_rand, checksum


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=2000, help="units per draw")
    parser.add_argument("--draws", type=int, default=200, help="propensity draws")
    parser.add_argument("--ratio", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cases = _cases(args.n, args.draws, args.ratio, np.random.default_rng(args.seed))
    print(f"n={args.n}, draws={args.draws}, ratio={args.ratio}")
    print(f"{'backend':10s} {'nn kernel':>12s} {'random kernel':>14s}")

    py_nn, py_rand, py_sum = _time_backend(_matchpy, cases, args.ratio)
    print(f"{'python':10s} {py_nn:11.3f}s {py_rand:13.3f}s")

    if _matchcore is None:
        print("compiled backend not built; run `pip install -e .` with Cython available")
        return

    cy_nn, cy_rand, cy_sum = _time_backend(_matchcore, cases, args.ratio)
    print(f"{'compiled':10s} {cy_nn:11.3f}s {cy_rand:13.3f}s")
    assert py_sum == cy_sum, "backends disagree"
    print(f"speedup: nn x{py_nn / cy_nn:.1f}, random x{py_rand / cy_rand:.1f}")


if __name__ == "__main__":
    main()
