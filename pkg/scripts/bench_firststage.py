#!/usr/bin/env python3
"""Benchmark the compiled training kernel against the numpy fallback.

Times full outcome-plus-propensity fits on representative cells and
reports the speedup, plus a parity check that both kernels land on the
same parameters up to floating-point summation order.
"""

import argparse
import time

import numpy as np

from naipw import DgpSpec, gen_dataset
from naipw.firststage import HAVE_COMPILED, NetHyper, fit_nuisances

CELLS = [
    ("wide  [32,32,32] n=750", dict(hidden_widths=(32, 32, 32), batch_size=96)),
    ("pinch [3,32,3]   n=750", dict(hidden_widths=(3, 32, 3), batch_size=96)),
]


def time_fit(data, hyper, backend, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fit_nuisances(data, hyper, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not HAVE_COMPILED:
        print("compiled kernel not built; nothing to compare")
        return

    spec = DgpSpec(n=750, block_sizes=(8, 8, 8, 8), seed=5)
    data = gen_dataset(spec)

    print(f"{'cell':26s} {'compiled':>10s} {'python':>10s} {'speedup':>9s}")
    for label, overrides in CELLS:
        hyper = NetHyper(epochs=args.epochs, seed=2, **overrides)
        t_c = time_fit(data, hyper, "compiled", args.repeats)
        t_p = time_fit(data, hyper, "python", args.repeats)
        print(f"{label:26s} {t_c:9.3f}s {t_p:9.3f}s {t_p / t_c:8.2f}x")

    hyper = NetHyper(epochs=20, seed=2, **CELLS[0][1])
    a = fit_nuisances(data, hyper, backend="compiled")
    b = fit_nuisances(data, hyper, backend="python")
    gap = max(
        np.abs(a.g_hat - b.g_hat).max(),
        np.abs(a.q1_hat - b.q1_hat).max(),
        np.abs(a.q0_hat - b.q0_hat).max(),
    )
    print(f"\nmax |prediction gap| between kernels after 20 epochs: {gap:.2e}")


if __name__ == "__main__":
    main()
