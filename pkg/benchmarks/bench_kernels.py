"""Time the numpy and numba kernels side by side.

    python benchmarks/bench_kernels.py --sizes 21 100 400 --repeat 200

Kernel timings use both backends in-process. Full solves run in subprocesses
because the backend is fixed at import time by GRIDCERT_NUMBA.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gridcert.kernels import NUMBA_KERNELS, NUMPY_KERNELS
from gridcert.netmodel import Mode, format_case
from gridcert.synthetic import random_case

SOLVE_SNIPPET = """
import sys, time
from gridcert import load_case, build_model, kernels
from gridcert.powerflow import newton_solve, approx_newton_solve
model = build_model(load_case(sys.argv[1]), sys.argv[2])
newton_solve(model); approx_newton_solve(model)
t0 = time.perf_counter()
for _ in range(int(sys.argv[3])):
    newton_solve(model); approx_newton_solve(model)
print(kernels.BACKEND, (time.perf_counter() - t0) / int(sys.argv[3]))
"""


def operands(rng, n):
    y = rng.uniform(-1, 0, (n, n))
    y = y + y.T
    np.fill_diagonal(y, -y.sum(axis=1) + 1.0)
    a = rng.uniform(-1, 1, n)
    c = rng.uniform(0, 20, n)
    b = rng.uniform(-1, 1, n)
    v = 1 + rng.uniform(-0.1, 0.1, n)
    return a, c, b, np.ascontiguousarray(y), v


def time_kernels(kernels, ops, repeat):
    a, c, b, y, v = ops
    jac = kernels["jacobian"](a, y, v)
    lu, piv, _ = kernels["lu_factor"](jac, 1e-12)
    calls = {
        "residual": lambda: kernels["residual"](a, c, b, y, v),
        "jacobian": lambda: kernels["jacobian"](a, y, v),
        "lu_factor": lambda: kernels["lu_factor"](jac, 1e-12),
        "lu_solve": lambda: kernels["lu_solve"](lu, piv, b),
    }
    out = {}
    for name, fn in calls.items():
        fn()  # compile / warm
        out[name] = min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat
    return out


def time_solves(path, mode, repeat):
    rows = {}
    for flag in ("0", "1"):
        env = dict(os.environ, GRIDCERT_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET, path, mode, str(repeat)],
                             env=env, capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        rows[backend] = float(secs)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[21, 100, 400])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--skip-solves", action="store_true")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    if NUMBA_KERNELS is NUMPY_KERNELS or NUMBA_KERNELS["residual"] is NUMPY_KERNELS["residual"]:
        print("numba not available; only numpy timings are meaningful")
    print(f"{'n':>5} {'kernel':<10} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for n in args.sizes:
        ops = operands(rng, n)
        t_np = time_kernels(NUMPY_KERNELS, ops, args.repeat)
        t_nb = time_kernels(NUMBA_KERNELS, ops, args.repeat)
        for name in t_np:
            print(f"{n:>5} {name:<10} {t_np[name] * 1e6:>10.2f} {t_nb[name] * 1e6:>10.2f} "
                  f"{t_np[name] / t_nb[name]:>8.2f}")

    if args.skip_solves:
        return 0
    print()
    print(f"{'n':>5} {'mode':<13} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    tmp = os.path.join(os.environ.get("TMPDIR", "/tmp"), "gridcert_bench_case.csv")
    for n in args.sizes:
        case = random_case(rng, n, p_scale=0.3, extra_edges=n // 10)
        with open(tmp, "w") as fh:
            fh.write(format_case(case))
        for mode in (Mode.MASTER_SLAVE, Mode.ISLAND):
            t = time_solves(tmp, mode.value, max(1, args.repeat // 10))
            print(f"{n:>5} {mode.value:<13} {t['numpy'] * 1e3:>10.3f} {t['numba'] * 1e3:>10.3f} "
                  f"{t['numpy'] / t['numba']:>8.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
