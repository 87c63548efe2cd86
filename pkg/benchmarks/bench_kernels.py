"""Compare the compiled kernels with their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Kernel timings call both implementations directly; the end-to-end timing
runs a SEM fit in a subprocess once per backend, switching with
SPATIALSPEC_PURE_PYTHON.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from spatialspec._kernels import _pure

try:
    from spatialspec._kernels import _compiled
except ImportError:
    _compiled = None

FIT_SNIPPET = """
import time, numpy as np
from spatialspec import SEM, BasisSpec, build_design, fit_qmle, knn_weights, BACKEND
from spatialspec.covariance import _Filter
rng = np.random.default_rng(0)
n = {n}
W = knn_weights(rng.uniform(size=(n, 2)), n // 20)
x = rng.uniform(0, 2 * np.pi, size=(n, 2))
psi = build_design(x, BasisSpec.power(3)).psi
y = 1 + x.sum(1) + _Filter([W], -1.0).solve([0.3], rng.standard_normal(n))
fit_qmle(y, psi, SEM(W))
t0 = time.perf_counter()
for _ in range({reps}):
    fit_qmle(y, psi, SEM(W))
print(BACKEND, (time.perf_counter() - t0) / {reps})
"""


def kernel_cases(rng):
    m, q, p = 3, 12, 10
    X = rng.normal(size=(m, 200, q))
    gram = np.ascontiguousarray(np.einsum("jnu,knv->jkuv", X, X))
    a, s = np.array([1.0, -0.3, 0.1]), np.array([1.0, 0.2])
    ev = np.linalg.eigvals(rng.normal(size=(400, 400)) / 40)
    re, im = np.ascontiguousarray(ev.real), np.ascontiguousarray(ev.imag)
    coords = rng.uniform(size=(2000, 2))
    return {
        "ar_profile (q=12, m=3)": lambda k: k.ar_profile(gram, a, s, p, np.empty(p)),
        "logabsdet_eig (n=400)": lambda k: k.logabsdet_eig(re, im, 0.4),
        "knn_indices (n=2000, k=10)": lambda k: k.knn_indices(coords, 10),
    }


def best(f, repeat):
    number = max(1, int(0.2 / max(min(timeit.repeat(f, number=1, repeat=3)), 1e-7)))
    return min(timeit.repeat(f, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=400)
    args = ap.parse_args()
    rng = np.random.default_rng(1)
    print(f"{'kernel':30s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, call in kernel_cases(rng).items():
        tp = best(lambda: call(_pure), args.repeat)
        if _compiled is None:
            print(f"{name:30s} {tp * 1e6:10.1f}us {'n/a':>12s}")
            continue
        tc = best(lambda: call(_compiled), args.repeat)
        print(f"{name:30s} {tp * 1e6:10.1f}us {tc * 1e6:10.1f}us {tp / tc:7.1f}x")

    code = FIT_SNIPPET.format(n=args.n, reps=args.repeat)
    times = {}
    for pure in (False, True):
        env = dict(os.environ)
        env.pop("SPATIALSPEC_PURE_PYTHON", None)
        if pure:
            env["SPATIALSPEC_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, t = out.stdout.split()
        times[backend] = float(t)
    print(f"\nSEM fit, n={args.n}, power basis p=10:")
    for backend, t in times.items():
        print(f"  {backend:8s} {t * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
