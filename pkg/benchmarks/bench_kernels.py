"""Time the banded kernels and one CN march under both backends.

Each backend runs in its own interpreter because the backend is fixed at
import time by PARAXFEM_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--n 4000] [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

_CHILD = r"""
import json, sys, time
import numpy as np
from paraxfem import _kernels as kr
from paraxfem import harness as hn

n, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
kl = ku = 3
W0 = np.zeros((n, 2 * kl + ku + 1), dtype=complex)
W0[:, :kl + ku + 1] = rng.normal(size=(n, kl + ku + 1)) + 1j * rng.normal(size=(n, kl + ku + 1))
W0[:, kl] += 10.0
b = rng.normal(size=n) + 0j


def best(fn):
    fn()  # warm-up (includes jit compilation)
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return min(out)


def factor():
    W = W0.copy()
    return kr.band_factor(W, kl, ku, True, 0.0)


W = W0.copy()
piv, info = kr.band_factor(W, kl, ku, True, 0.0)
res = {
    "backend": kr.BACKEND,
    "factor_s": best(factor),
    "solve_s": best(lambda: kr.band_solve(W, piv, kl, ku, b.copy())),
    "march_n400_s": best(lambda: hn.strip_study(1, (400,), threads=1)),
}
print(json.dumps(res))
"""


def run_backend(disable: bool, n: int, repeat: int) -> dict:
    env = dict(os.environ)
    if disable:
        env["PARAXFEM_DISABLE_NUMBA"] = "1"
    else:
        env.pop("PARAXFEM_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", _CHILD, str(n), str(repeat)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4000, help="matrix order")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rows = [run_backend(False, args.n, args.repeat), run_backend(True, args.n, args.repeat)]
    print(f"{'backend':<8} {'factor [ms]':>12} {'solve [ms]':>12} {'march n=400 [s]':>16}")
    for r in rows:
        print(f"{r['backend']:<8} {1e3 * r['factor_s']:12.3f} {1e3 * r['solve_s']:12.3f} "
              f"{r['march_n400_s']:16.3f}")
    if rows[0]["backend"] == "numba":
        print(f"march speedup: {rows[1]['march_n400_s'] / rows[0]['march_n400_s']:.1f}x")


if __name__ == "__main__":
    main()
