"""Benchmark the compiled Gibbs kernel against the pure-NumPy fallback.

Runs the full sampler on a synthetic panel through each available backend
and reports iterations per second plus the speedup. Example:

    python benchmarks/kernel_benchmark.py --donors 50 --pre-periods 30
"""

import argparse
import time

import spillsc as sc
import spillsc._kernels as kernels
from spillsc._kernels import available_backends


def _time_backend(mod, std, distances, spec, config, repeats):
    saved = (kernels.run_chain_dhs, kernels.run_chain_ds2)
    kernels.run_chain_dhs, kernels.run_chain_ds2 = mod.run_chain_dhs, mod.run_chain_ds2
    try:
        sc.fit(std, spec, distances, config)  # warm-up (JIT-free, but caches warm)
        best = float("inf")
        for _ in range(repeats):
            start = time.perf_counter()
            sc.fit(std, spec, distances, config)
            best = min(best, time.perf_counter() - start)
        return best
    finally:
        kernels.run_chain_dhs, kernels.run_chain_ds2 = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--donors", type=int, default=50)
    parser.add_argument("--pre-periods", type=int, default=30)
    parser.add_argument("--iterations", type=int, default=4000)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--family", choices=["DHS", "DS2", "both"], default="both")
    args = parser.parse_args()

    panel, _ = sc.generate(sc.SimConfig(
        T0=args.pre_periods, n_post=1, J=args.donors, spill_fraction=0.25, seed=7))
    std, _ = sc.standardize(panel)
    distances = sc.panel_distances(std, kappa_d=0.5)
    config = sc.McmcConfig(n_chains=1, n_iterations=args.iterations, seed=11)

    families = ["DHS", "DS2"] if args.family == "both" else [args.family]
    backends = available_backends()
    print(f"J={args.donors} T0={args.pre_periods} iterations={args.iterations} "
          f"(best of {args.repeats})\n")
    for family in families:
        extra = {"exclusion_fraction": 0.25} if family == "DS2" else {}
        spec = sc.PriorSpec(family=family, kappa_d=0.5, **extra)
        times = {}
        for name, mod in backends.items():
            times[name] = _time_backend(mod, std, distances, spec, config, args.repeats)
            rate = args.iterations / times[name]
            print(f"{family:4s} {name:7s} {times[name]*1e3:9.1f} ms  {rate:10.0f} it/s")
        if {"cython", "python"} <= times.keys():
            print(f"{family:4s} speedup {times['python'] / times['cython']:.1f}x\n")


if __name__ == "__main__":
    main()
