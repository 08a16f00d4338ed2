"""Compare the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--draws N] [--sweeps N] [--repeat N]

Both paths run in this process; the flag in ``trotterbench._accel`` is
switched between runs.  Outputs are checked for bitwise equality before any
timing is reported.
"""

import argparse
import time

import numpy as np

from trotterbench import _accel
from trotterbench.kernel import color_sites, run_point, warm_up
from trotterbench.model import build_schedule, generate_instance, trotterize
from trotterbench.rng import mt_alloc, mt_fill_u32, mt_init


def best_of(repeat, fn):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def rng_case(draws):
    seeded = mt_init(mt_alloc(1, 32), 1)

    def go():
        return mt_fill_u32(seeded.copy(), 0, 7, draws)
    return go


def sweep_case(qubits, layers, lanes, sweeps):
    instance = generate_instance(qubits, 1)
    point = build_schedule(3, 3.0, 10.0).points[1]
    template = trotterize(instance, point, layers, mt_init(mt_alloc(1, 1), 1))
    schedule = color_sites(template, lanes)
    seeded = mt_init(mt_alloc(1, lanes), 2)

    def go():
        system = template.copy()
        run_point(system, sweeps, schedule, seeded.copy(), 0)
        return system.spins
    return go


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=1_000_000)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    cases = [
        ("mt19937 fill", args.draws, "draws", rng_case(args.draws)),
        ("sweeps N=8 K=128 lanes=1", 8 * 128 * args.sweeps, "updates",
         sweep_case(8, 128, 1, args.sweeps)),
        ("sweeps N=32 K=128 lanes=32", 32 * 128 * args.sweeps, "updates",
         sweep_case(32, 128, 32, args.sweeps)),
    ]
    _accel.USE_JIT = True
    warm_up()
    print(f"{'case':<28} {'numba s':>9} {'numpy s':>9} {'speedup':>8}  {'ns/item (numba)':>15}")
    for name, items, unit, fn in cases:
        _accel.USE_JIT = True
        t_jit, a = best_of(args.repeat, fn)
        _accel.USE_JIT = False
        t_np, b = best_of(args.repeat, fn)
        if not np.array_equal(a, b):
            raise SystemExit(f"{name}: paths disagree")
        print(f"{name:<28} {t_jit:9.4f} {t_np:9.4f} {t_np / t_jit:8.1f}  {1e9 * t_jit / items:15.1f}")
    _accel.USE_JIT = _accel.HAVE_NUMBA


if __name__ == "__main__":
    main()
