"""Compare the compiled and pure-Python kernels on identical inputs.

Usage: python3 benchmarks/bench_kernels.py [--L 16] [--repeat 3]

Each kernel is run on both backends from the same RNG state; the script
checks that the outputs agree bit for bit and reports the best wall time.
"""

import argparse
import time

import numpy as np

from spindissim import engine, kernels
from spindissim.lattice import build_lattice, build_schedule


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(L):
    lat = build_lattice(L)
    bonds = np.ascontiguousarray(lat.bonds)
    pairs, offsets = engine.schedule_arrays(build_schedule(lat))

    def discrete(k):
        s = lat.signs.astype(np.int8).copy()
        k.discrete_rounds(s, pairs, offsets, 20, engine.replica_rng(0, 9, 0))
        return s

    def continuous(k):
        s = lat.signs.astype(np.int8).copy()
        k.continuous_events(s, bonds, 0.0, 10.0, float(lat.n_bonds), engine.replica_rng(0, 9, 1))
        return s

    def sse(k):
        s = lat.signs.astype(np.int8).copy()
        ops = np.full(int(1.5 * 4.0 * lat.n_bonds), -1, dtype=np.intp)
        rng = engine.replica_rng(0, 9, 2)
        for _ in range(5):
            k.sse_diagonal_update(s, ops, bonds, 4.0, rng)
            k.sse_loop_update(s, ops, bonds, rng)
        return np.concatenate([s.astype(np.intp), ops])

    return {"discrete_rounds x20": discrete, "continuous_events gamma t=10": continuous,
            "sse sweep x5 (beta=4)": sse}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = kernels.backends()
    print(f"L={args.L}, backends: {', '.join(backends)}")
    print(f"{'kernel':32s} " + " ".join(f"{b:>12s}" for b in backends) + "  speedup  identical")
    for name, fn in cases(args.L).items():
        res = {b: _time(lambda k=k: fn(k), args.repeat) for b, k in backends.items()}
        times = " ".join(f"{res[b][0] * 1e3:10.2f}ms" for b in backends)
        if "cython" in res:
            speed = res["python"][0] / res["cython"][0]
            same = np.array_equal(res["python"][1], res["cython"][1])
            print(f"{name:32s} {times}  {speed:7.1f}x  {same}")
        else:
            print(f"{name:32s} {times}")


if __name__ == "__main__":
    main()
