"""Compare the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from qndsim import _fallback, _rng, kernels


def _cases():
    keys = _rng.derive_keys(1, np.arange(200))
    n_atoms = np.full(200, 10_000)
    thr = _rng.scatter_threshold(0.093)
    x = np.random.default_rng(0).normal(size=(1_000_000, 3))
    boot_keys = _rng.derive_keys(2, np.arange(4))
    return [
        ("atomic_spin_sums", "2e6 atom-trials", lambda m: m.atomic_spin_sums(keys, n_atoms, thr), 2e6),
        ("resample_sums", "4 x 1e6 rows", lambda m: m.resample_sums(x, boot_keys), 4e6),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    impls = [("python", _fallback)]
    if kernels.compiled is not None:
        impls.append(("compiled", kernels.compiled))
    else:
        print("compiled kernels not built; timing the fallback only")
    print(f"{'kernel':18s} {'workload':16s} {'impl':9s} {'best s':>8s} {'ns/item':>8s}")
    for name, label, fn, items in _cases():
        best = {}
        for impl_name, mod in impls:
            fn(mod)  # warm up
            best[impl_name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
            print(f"{name:18s} {label:16s} {impl_name:9s} {best[impl_name]:8.3f} {1e9 * best[impl_name] / items:8.1f}")
        if len(best) == 2:
            print(f"{'':18s} {'':16s} speedup   {best['python'] / best['compiled']:8.1f}x")


if __name__ == "__main__":
    main()
