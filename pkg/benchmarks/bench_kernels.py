#!/usr/bin/env python3
"""Compare the compiled prox kernels with the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--csv out.csv]
"""

import argparse
import csv
import sys
import time

import numpy as np

from pf2admm.prox import _backend


def _time(fn, repeats):
    times = np.empty(repeats)
    for i in range(repeats):
        t0 = time.perf_counter()
        fn()
        times[i] = time.perf_counter() - t0
    return times


def cases(rng):
    # rows x length, the shapes the B-mode prox sees (R components, J entries)
    for rows, n in [(3, 50), (5, 200), (5, 1000)]:
        Y = rng.standard_normal((rows, n))
        yield f"tv {rows}x{n}", lambda k, Y=Y: k.tv_denoise_rows(Y, 0.3)
        Yu = np.cumsum(rng.standard_normal((rows, n)), axis=1) + 0.5 * Y
        yield f"unimodal_nn {rows}x{n}", lambda k, Y=Yu: k.unimodal_rows(Y, nonneg=True)
        yield f"isotonic {rows}x{n}", lambda k, Y=Yu: k.isotonic_rows(Y)


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--csv", default=None)
    args = p.parse_args(argv)

    compiled = _backend.compiled_kernels
    python = _backend.python_kernels
    if compiled is None:
        print("compiled extension not built; only the Python kernels are available", file=sys.stderr)

    rng = np.random.default_rng(0)
    rows = []
    print(f"{'case':<22} {'python ms':>10} {'cython ms':>10} {'speedup':>8}  max|diff|")
    for name, fn in cases(rng):
        t_py = _time(lambda: fn(python), max(2, args.repeats // 10)).min()
        if compiled is not None:
            t_c = _time(lambda: fn(compiled), args.repeats).min()
            diff = float(np.max(np.abs(fn(python) - fn(compiled))))
        else:
            t_c, diff = float("nan"), float("nan")
        rows.append([name, 1e3 * t_py, 1e3 * t_c, t_py / t_c, diff])
        print(f"{name:<22} {1e3 * t_py:>10.3f} {1e3 * t_c:>10.4f} {t_py / t_c:>8.1f}  {diff:.1e}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "python_ms", "cython_ms", "speedup", "max_abs_diff"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
