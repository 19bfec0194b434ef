"""Compiled core versus numpy fallback on the three hot kernels.

Usage: python3 benchmarks/bench_core.py [--repeat 5] [--csv out.csv]

Both backends receive identical pre-drawn randomness; the script checks
that outputs agree before reporting timings.
"""

import argparse
import csv
import math
import sys
import time

import numpy as np

from mlmc_opt import _backend
from mlmc_opt.core import make_stream
from mlmc_opt.mlmc import GEOMETRIC_HALF, level_layout, sample_levels


def ar1_case(n=200_000, T=512):
    s = make_stream(1, 0)
    length, half, weight = level_layout(GEOMETRIC_HALF, sample_levels(GEOMETRIC_HALF, s, n), T)
    normals = s.standard_normal(int((length - 1).sum()))
    args = (length, half, weight, 2.0, 0.5, math.sqrt(0.75), 10.0, normals)
    return "ar1_mlmc_batch", lambda k: k.ar1_mlmc_batch(*args), f"n={n} T={T}"


def rwmh_case(steps=20_000, q=10):
    s = make_stream(2, 0)
    z = s.standard_normal((steps, q))
    lu = s.log_uniform(steps)
    args = (np.zeros(q), np.full(q, 1.0), 1.0, 2.4 / math.sqrt(q), z, lu)
    return "rwmh_gauss_chain", lambda k: k.rwmh_gauss_chain(*args)[0], f"steps={steps} q={q}"


def isir_case(n=20_000, T=64, k=5):
    s = make_stream(3, 0)
    length, half, weight = level_layout(GEOMETRIC_HALF, sample_levels(GEOMETRIC_HALF, s, n), T)
    steps = int(length.sum())
    args = (length, half, weight, 0.0, 3.0, k, 0.0, 1.5, 1.5 * s.standard_normal(n),
            s.random(steps), s.standard_normal(steps * (k - 1)), s.random(steps))
    return "isir_lg_batch", lambda kern: kern.isir_lg_batch(*args)[0], f"n={n} T={T} k={k}"


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)

    if "cython" not in _backend.BACKENDS:
        print("compiled core not built; only the python backend is available", file=sys.stderr)
    names = [b for b in ("cython", "python") if b in _backend.BACKENDS]
    rows = []
    for case in (ar1_case, rwmh_case, isir_case):
        label, fn, size = case()
        outs = {b: np.asarray(fn(_backend.get(b))) for b in names}
        if len(outs) == 2 and not np.allclose(outs["cython"], outs["python"], rtol=1e-12, atol=1e-12):
            raise SystemExit(f"{label}: backends disagree")
        t = {b: best_of(lambda: fn(_backend.get(b)), args.repeat) for b in names}
        speedup = t["python"] / t["cython"] if "cython" in t else float("nan")
        rows.append((label, size, t.get("cython", float("nan")), t["python"], speedup))

    print(f"{'kernel':<18} {'size':<20} {'cython_s':>10} {'python_s':>10} {'speedup':>8}")
    for r in rows:
        print(f"{r[0]:<18} {r[1]:<20} {r[2]:>10.4f} {r[3]:>10.4f} {r[4]:>8.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "size", "cython_s", "python_s", "speedup"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
