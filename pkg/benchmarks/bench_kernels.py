"""Compare the compiled and pure-Python backends on the hot loops.

    python benchmarks/bench_kernels.py [--samples N] [--taps T] [--repeat R]

Prints best-of-R wall time per backend and the speedup. Results from the
two backends are also checked for bit-identity.
"""
import argparse
import time

import numpy as np

from boardsim import kernels
from boardsim.adaptive import LmsConfig, PredictorConfig
from boardsim.dualcore import PipelineConfig, run_dual_pipeline
from boardsim.signal import SampleStream


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_lms(samples, taps, repeat):
    rng = np.random.default_rng(0)
    u = rng.standard_normal(samples)
    d = np.convolve(u, [0.5, -0.3, 0.2])[:samples]
    c0 = np.zeros(taps)
    rows = {}
    for name, mod in kernels.backends().items():
        rows[name] = best_of(lambda: mod.lms_run(u, d, c0, taps, 0, 0.002, 0.0, True, 1e-6, 0),
                             repeat)
    return rows


def bench_pipeline(samples, taps, block_len, repeat):
    rng = np.random.default_rng(1)
    x = SampleStream(rng.standard_normal(samples), 333_000.0)
    cfg = PipelineConfig(block_len, PredictorConfig(LmsConfig(0.002, taps, normalized=True)),
                         scheduler_seed=7)
    rows = {}
    saved = kernels.pipeline_run
    try:
        if saved is not None:
            rows["cython"] = best_of(lambda: run_dual_pipeline(x, None, cfg), repeat)
        kernels.pipeline_run = None
        rows["python"] = best_of(lambda: run_dual_pipeline(x, None, cfg), 1)
    finally:
        kernels.pipeline_run = saved
    return rows


def report(title, rows, same):
    print(title)
    for name, (t, _) in rows.items():
        print(f"  {name:<7} {t * 1e3:10.2f} ms")
    if "cython" in rows and "python" in rows:
        print(f"  speedup {rows['python'][0] / rows['cython'][0]:10.1f}x   identical: {same}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--taps", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}")

    rows = bench_lms(args.samples, args.taps, args.repeat)
    outs = [r[1] for r in rows.values()]
    same = all(np.array_equal(outs[0][0], o[0]) and np.array_equal(outs[0][2], o[2])
               for o in outs)
    report(f"lms_run: {args.samples} samples, {args.taps} taps, NLMS", rows, same)

    n = min(args.samples, 20_000)
    rows = bench_pipeline(n, args.taps, 16, args.repeat)
    outs = [r[1] for r in rows.values()]
    same = all(np.array_equal(outs[0].y.samples, o.y.samples) for o in outs)
    report(f"run_dual_pipeline: {n} samples, {args.taps} taps, block 16", rows, same)


if __name__ == "__main__":
    main()
