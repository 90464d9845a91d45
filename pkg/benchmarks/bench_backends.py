#!/usr/bin/env python3
"""Timing comparison of the jitted hot kernels against the pure-numpy
fallback.

The fallback is what you get with RIESZ_LAB_DISABLE_NUMBA=1; this script
spawns one subprocess per backend so both import paths are exercised
exactly as users see them, then prints a side-by-side table.

Usage: python benchmarks/bench_backends.py [--quick]
"""

import argparse
import json
import os
import subprocess
import sys
import textwrap

WORKLOADS = {
    "structure_factor_1d (N=2048, K=8192)": """
import numpy as np
from riesz_lab import _accel
x = np.random.default_rng(0).uniform(0, 1, 2048)
_accel.sf_1d(x, 1.0, 8)  # warm the jit
t0 = time.perf_counter()
for _ in range(reps):
    _accel.sf_1d(x, 1.0, 8192)
dt = (time.perf_counter() - t0) / reps
""",
    "mode_eval_1d (N=2048, K=8192)": """
import numpy as np
from riesz_lab import _accel
rng = np.random.default_rng(0)
x = rng.uniform(0, 1, 2048)
coef = (rng.standard_normal(8192) + 1j * rng.standard_normal(8192)) / 8192
_accel.eval_modes_1d(coef[:8], x, 1.0)
t0 = time.perf_counter()
for _ in range(reps):
    _accel.eval_modes_1d(coef, x, 1.0)
dt = (time.perf_counter() - t0) / reps
""",
    "pairwise_energy_free (N=4096)": """
import numpy as np
from riesz_lab import _accel
x = np.random.default_rng(0).uniform(0, 1, (4096, 1))
_accel.pair_sum_g_free(x[:64], 0.5)
t0 = time.perf_counter()
for _ in range(reps):
    _accel.pair_sum_g_free(x, 0.5)
dt = (time.perf_counter() - t0) / reps
""",
    "pairwise_force_free (N=2048, d=2)": """
import numpy as np
from riesz_lab import _accel
x = np.random.default_rng(0).uniform(0, 1, (2048, 2))
_accel.pair_force_free(x[:64], 0.5)
t0 = time.perf_counter()
for _ in range(reps):
    _accel.pair_force_free(x, 0.5)
dt = (time.perf_counter() - t0) / reps
""",
    "modulated_energy torus (N=1024, K=4096)": """
import numpy as np
from riesz_lab import KernelSpec, Torus, modulated_energy, sample_iid, torus_uniform
spec = KernelSpec(1, 0.5, Torus(1.0, 4096))
mu = torus_uniform(1.0, 1)
X = sample_iid(mu, 1024, seed=0)
modulated_energy(X, mu, spec)
t0 = time.perf_counter()
for _ in range(reps):
    modulated_energy(X, mu, spec)
dt = (time.perf_counter() - t0) / reps
""",
}


def run_case(body: str, disable_numba: bool, reps: int) -> float:
    script = f"import time\nreps = {reps}\n{body}\nprint(dt)"
    env = dict(os.environ)
    env["RIESZ_LAB_DISABLE_NUMBA"] = "1" if disable_numba else "0"
    proc = subprocess.run(
        [sys.executable, "-c", script], capture_output=True, text=True, env=env, timeout=600
    )
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr)
    return float(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="single repetition per case")
    args = ap.parse_args()
    reps = 1 if args.quick else 3
    print(f"{'workload':45s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, body in WORKLOADS.items():
        t_nb = run_case(body, disable_numba=False, reps=reps)
        t_np = run_case(body, disable_numba=True, reps=reps)
        print(f"{name:45s} {t_nb * 1e3:9.1f}ms {t_np * 1e3:9.1f}ms {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
