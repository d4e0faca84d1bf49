"""Numba kernels vs their numpy twins, on inputs shaped like the stride sweep.

    python benchmarks/bench_kernels.py            # per-kernel timings
    python benchmarks/bench_kernels.py --solvers  # also whole solver runs, one subprocess per backend

Both kernel sets live in the same process (``NUMBA_KERNELS`` / ``NUMPY_KERNELS``);
the solver comparison re-imports the package with ``STFTPR_DISABLE_NUMBA=1``.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from stftpr import _kernels
from stftpr.core import make_window, sample_sparse_instance
from stftpr.stft import build_measurement_operator, make_geometry


def kernel_cases(rng):
    N, W, L, K, R, k = 64, 16, 4, 16, 50, 6
    D, inst = sample_sparse_instance(N, N, k, "gaussian", rng_seed=0)
    op = build_measurement_operator(make_window("square", W, N), L, K, D)
    A = op.rows
    Atr, Ati = np.ascontiguousarray(A.real.T), np.ascontiguousarray(A.imag.T)
    y = op.measure(inst.coefficients)
    idx = np.array(inst.support, dtype=np.int64)
    s = rng.standard_normal(k)
    trace = np.empty(101)

    geom = make_geometry(make_window("square", W, N), L, K)
    sidx = np.ascontiguousarray(geom.sample_index, dtype=np.int64)
    taps = np.ascontiguousarray(geom.section_taps, dtype=complex)
    x = rng.standard_normal((R, N)) + 1j * rng.standard_normal((R, N))
    frames = np.zeros((R, geom.M, K), dtype=complex)
    F = np.fft.fft(rng.standard_normal((R, geom.M, K)) + 1j * rng.standard_normal((R, geom.M, K)), axis=-1)
    sqrt_y = np.sqrt(rng.uniform(0, 4, (geom.M, K)))
    cramp = np.ascontiguousarray(np.conj(geom.ramp))
    B = np.empty_like(F)
    out = np.empty((R, N), dtype=complex)
    cov = np.ascontiguousarray(geom.coverage, dtype=float)
    T = np.empty((R, W, N), dtype=complex)
    T_full = rng.standard_normal((R, W, N)) + 1j * rng.standard_normal((R, W, N))
    u0 = np.tile(taps / np.linalg.norm(taps), (R, 1))

    return {
        "objective": (Atr, Ati, y, idx, s),
        "gradient": (Atr, Ati, y, idx, s),
        "dgn": (Atr, Ati, y, idx, s, 100, 1e-30, 1e-6, trace),
        "rank_one": (T_full, taps, u0, 50, 1e-14),
        "frame": (x, sidx, taps, frames),
        "residual": (F, sqrt_y),
        "magnitude_step": (F, sqrt_y, cramp, 1e-14, B),
        "overlap_add": (F, sidx, np.conj(taps), cov, out),
        "align": (x, F, sidx, taps, T),
    }


def best_of(fn, args, repeat=5):
    t = timeit.Timer(lambda: fn(*args))
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def bench_kernels():
    if _kernels.NUMBA_KERNELS is None:
        sys.exit("numba is not available (or STFTPR_DISABLE_NUMBA is set); nothing to compare")
    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':<16}{'numba':>12}{'numpy':>12}{'speed-up':>10}")
    for name, args in cases.items():
        _kernels.NUMBA_KERNELS[name](*args)  # compile outside the timing
        t_nb = best_of(_kernels.NUMBA_KERNELS[name], args)
        t_np = best_of(_kernels.NUMPY_KERNELS[name], args)
        print(f"{name:<16}{t_nb * 1e6:>10.1f}us{t_np * 1e6:>10.1f}us{t_np / t_nb:>9.1f}x")


SOLVER_SNIPPET = """
import json, time
from stftpr import BACKEND
from stftpr.harness.experiment import Cell, run_trial
from stftpr.harness.presets import stride_sweep_config
cfg = stride_sweep_config(trials=1, altproj_restarts=10, altproj_max_iterations=200)
out = {"backend": BACKEND}
for method, k in (("STFT-GESPAR", 8), ("PS-GESPAR", 6), ("GLA", 4), ("PCGP", 4)):
    cell = Cell(k, 4, 16, float("inf"))
    run_trial(cell, method, cfg)  # warm-up (numba compile / cache load)
    t0 = time.perf_counter()
    for t in range(3):
        run_trial(cell, method, cfg, trial=t)
    out[method] = (time.perf_counter() - t0) / 3
print(json.dumps(out))
"""


def bench_solvers():
    rows = []
    for disable in ("0", "1"):
        env = dict(os.environ, STFTPR_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", SOLVER_SNIPPET], env=env, capture_output=True,
                             text=True, check=True)
        rows.append(json.loads(res.stdout.strip().splitlines()[-1]))
    nb, npy = rows
    print(f"\n{'trial (L=4)':<16}{nb['backend']:>12}{npy['backend']:>12}{'speed-up':>10}")
    for method in ("STFT-GESPAR", "PS-GESPAR", "GLA", "PCGP"):
        print(f"{method:<16}{nb[method] * 1e3:>10.1f}ms{npy[method] * 1e3:>10.1f}ms"
              f"{npy[method] / nb[method]:>9.1f}x")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--solvers", action="store_true", help="also time whole trials per backend")
    args = p.parse_args()
    bench_kernels()
    if args.solvers:
        bench_solvers()


if __name__ == "__main__":
    main()
