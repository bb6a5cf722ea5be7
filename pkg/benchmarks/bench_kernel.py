"""Benchmark the compiled Grassmann kernel against the pure-Python fallback.

Both backends implement the same contract (see supergeo/_kernel): sparse
term arithmetic on parallel (keys, values) arrays, where each key is a
bitmask over the odd generators.  This script times the three hot
operations (mul_terms, add_terms, lderiv_terms) on random inputs of a few
sizes, checks that the backends agree on every output, and reports the
per-call cost and speedup.

With --end-to-end it also times a full Levi-Civita solve plus torsion and
compatibility residuals in a subprocess per backend, selecting the backend
through the SUPERGEO_PURE_PYTHON environment variable exactly as an
ordinary import would.

Usage:
    python3 benchmarks/bench_kernel.py [--repeats N] [--seed S] [--end-to-end]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from supergeo._kernel import gkernel, pykernel

# (label, number of odd generators, number of nonzero terms per operand)
SIZES = [
    ("small", 4, 6),
    ("medium", 8, 40),
    ("large", 12, 400),
]

END_TO_END_SNIPPET = """
import time
import numpy as np
from supergeo import kernel_backend
from supergeo.scenario import random_scenario
from supergeo.geometry import levi_civita

scn = random_scenario(3, 4, 0, seed=424, scale=0.2)
conn = levi_civita(scn.metric)
points = [np.array([x, 0.1, -0.2]) for x in np.linspace(-0.7, 0.7, 4)]

conn.at(points[0])  # warm up caches and numpy internals
t0 = time.perf_counter()
acc = 0.0
for x in points:
    table = conn.at(x)
    acc += sum(abs(g.coefficient(())) for g in table.flat)
dt = time.perf_counter() - t0
print(kernel_backend, dt, acc)
"""


def random_terms(rng, q, k):
    """Sorted unique uint32 masks over q generators with float64 values."""
    k = min(k, 1 << q)
    keys = rng.choice(1 << q, size=k, replace=False).astype(np.uint32)
    keys.sort()
    vals = rng.standard_normal(k)
    return keys, vals


def check_agreement(operands):
    """Every operation must give identical keys and near-identical values."""
    worst = 0.0
    for ka, va, kb, vb in operands:
        for op in ("mul_terms", "add_terms"):
            kg, vg = getattr(gkernel, op)(ka, va, kb, vb)
            kp, vp = getattr(pykernel, op)(ka, va, kb, vb)
            if not np.array_equal(kg, kp):
                raise SystemExit(f"backends disagree on {op} keys")
            if len(vg):
                worst = max(worst, float(np.abs(vg - vp).max()))
        for alpha in (1, 2):
            kg, vg = gkernel.lderiv_terms(ka, va, alpha)
            kp, vp = pykernel.lderiv_terms(ka, va, alpha)
            if not np.array_equal(kg, kp) or not np.array_equal(vg, vp):
                raise SystemExit("backends disagree on lderiv_terms")
    return worst


def time_op(fn, args_list, repeats):
    """Best-of-`repeats` total time for one pass over args_list, in seconds."""
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_sizes(rng, repeats, batch=200):
    rows = []
    for label, q, k in SIZES:
        operands = [
            random_terms(rng, q, k) + random_terms(rng, q, k)
            for _ in range(batch)
        ]
        gap = check_agreement(operands[: max(4, batch // 20)])
        binary = [(ka, va, kb, vb) for ka, va, kb, vb in operands]
        unary = [(ka, va, 1) for ka, va, _, _ in operands]
        for op, args_list in [
            ("mul_terms", binary),
            ("add_terms", binary),
            ("lderiv_terms", unary),
        ]:
            tg = time_op(getattr(gkernel, op), args_list, repeats) / batch
            tp = time_op(getattr(pykernel, op), args_list, repeats) / batch
            rows.append((label, q, k, op, tp * 1e6, tg * 1e6, tp / tg, gap))
    return rows


def print_table(rows):
    hdr = f"{'size':<8}{'q':>3}{'terms':>7}  {'op':<14}{'python us':>11}{'cython us':>11}{'speedup':>9}"
    print(hdr)
    print("-" * len(hdr))
    for label, q, k, op, tp, tg, ratio, _ in rows:
        print(f"{label:<8}{q:>3}{k:>7}  {op:<14}{tp:>11.2f}{tg:>11.2f}{ratio:>8.1f}x")
    gap = max(r[-1] for r in rows)
    print(f"\nmax |python - cython| over checked outputs: {gap:.3e}")


def bench_end_to_end():
    print("\nend-to-end: pointwise Levi-Civita tables on a random (3,4) even metric")
    checks = {}
    times = {}
    for pure in ("0", "1"):
        env = dict(os.environ, SUPERGEO_PURE_PYTHON=pure)
        out = subprocess.run(
            [sys.executable, "-c", END_TO_END_SNIPPET],
            env=env, capture_output=True, text=True, check=True,
        ).stdout.split()
        backend, dt, acc = out[0], float(out[1]), float(out[2])
        times[backend] = dt
        checks[backend] = acc
        print(f"  {backend:<8} {dt * 1e3:9.1f} ms   (coefficient mass {acc:.12g})")
    if abs(checks["cython"] - checks["python"]) > 1e-9:
        raise SystemExit("backends disagree on the end-to-end workload")
    print(f"  speedup {times['python'] / times['cython']:.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing passes per operation; best is kept (default 5)")
    ap.add_argument("--seed", type=int, default=20240, help="RNG seed")
    ap.add_argument("--end-to-end", action="store_true",
                    help="also time a full geometry workload per backend")
    args = ap.parse_args()

    print(f"numpy {np.__version__}; backends: {gkernel.BACKEND} vs {pykernel.BACKEND}\n")
    rows = bench_sizes(np.random.default_rng(args.seed), args.repeats)
    print_table(rows)
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
