"""Compare the numba and numpy scattering backends on a two-eigenvalue symbol.

Run with ``python3 benchmarks/bench_scattering.py``.  Reports the median
wall time of one ``scatter`` call (three marches) per grid size, the
speedup, and the largest disagreement in a and b between backends.
"""
import argparse
import time

import numpy as np

from manakov_nfdm import _accel
from manakov_nfdm.core import TimeGrid
from manakov_nfdm.darboux import synthesize
from manakov_nfdm.nft import scatter
from manakov_nfdm.transceiver import SignalingPlan, map_bits


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def run(sizes, repeats):
    plan = SignalingPlan()
    spec = map_bits(np.array([0, 1, 1, 0, 1, 0, 0, 1]), plan)
    print(f"numba available: {_accel.numba_installed}; "
          f"default backend: {'numba' if _accel.USE_NUMBA else 'numpy'}")
    print(f"{'samples':>8} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8} {'max diff':>10}")
    for n in sizes:
        sig = synthesize(spec, TimeGrid.centered(n, plan.slot_width))
        lam = spec[1].lam
        ref = scatter(sig, lam, use_numba=False)
        t_np = _median_time(lambda: scatter(sig, lam, use_numba=False), repeats)
        if _accel.numba_installed:
            fast = scatter(sig, lam, use_numba=True)     # also triggers compilation
            t_nb = _median_time(lambda: scatter(sig, lam, use_numba=True), repeats)
            diff = max(abs(fast.a - ref.a), abs(fast.b1 - ref.b1), abs(fast.b2 - ref.b2))
            print(f"{n:8d} {1e3 * t_nb:10.3f} {1e3 * t_np:10.3f} {t_np / t_nb:8.1f} {diff:10.2e}")
        else:
            print(f"{n:8d} {'n/a':>10} {1e3 * t_np:10.3f} {'n/a':>8} {'n/a':>10}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096, 16384, 65536])
    p.add_argument("--repeats", type=int, default=7)
    args = p.parse_args(argv)
    run(args.sizes, args.repeats)


if __name__ == "__main__":
    main()
