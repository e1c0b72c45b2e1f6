"""Compiled core vs pure-Python fallback on the Monte Carlo hot loops.

    python3 benchmarks/bench_kernels.py [--paths N] [--side N]

Both backends consume identical random streams, so the script also checks
that their outputs agree exactly.
"""
import argparse
import time

import numpy as np

from jklab import _fallback
from jklab.process import JumpKernelSpec, SubordinatorSpec, build_generator
from jklab.rng import PURPOSE, bit_generator, bit_generators
from jklab.scale import ScaleFunction
from jklab.space import build_lattice_torus

try:
    from jklab import _core
except ImportError:
    _core = None


def timed(fn, repeat=3):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--side", type=int, default=512)
    args = ap.parse_args()
    if _core is None:
        print("compiled core not built; nothing to compare")
        return
    sp = build_lattice_torus(1, args.side)
    gen = build_generator(sp, JumpKernelSpec(ScaleFunction.piecewise_power([1.0], [1.0, 3.0])))
    cum, esc = gen.jump_table(), gen.escape
    starts = np.zeros(args.paths, dtype=np.int64)
    inside = np.zeros(sp.n, dtype=np.uint8)
    inside[sp.ball(0, 8)] = 1
    spec = SubordinatorSpec(0.5, 1.5)
    rate = spec.small_rate + spec.large_rate
    sub_args = (spec.gamma1, spec.gamma2, spec.cutoff, spec.drift, rate, spec.small_rate / rate, 1.0, 20000)

    cases = {
        "path_endpoints (t=20)": lambda impl: impl.path_endpoints(
            cum, esc, starts, 20.0, bit_generators(1, 0, args.paths, PURPOSE["mc_kernel"])),
        "exit_times (r=8)": lambda impl: impl.exit_times(
            cum, esc, inside, starts, bit_generators(1, 0, args.paths, PURPOSE["exit"]), float("inf")),
        "subordinator (20000 draws)": lambda impl: impl.subordinator_increments(
            *sub_args, bit_generator(1, 0, PURPOSE["subordinator"])),
    }
    print(f"{'kernel':28s} {'compiled s':>11s} {'python s':>10s} {'speedup':>8s}  outputs equal")
    for name, fn in cases.items():
        tc, oc = timed(lambda: fn(_core))
        tp, op = timed(lambda: fn(_fallback), repeat=1)
        equal = np.array_equal(np.asarray(oc), np.asarray(op))
        print(f"{name:28s} {tc:11.4f} {tp:10.4f} {tp / tc:8.1f}  {equal}")


if __name__ == "__main__":
    main()
