"""Time each engine under the compiled and the pure-numpy backend.

Each backend runs in its own interpreter because the choice is made at
import time from ``APPROXFA_DISABLE_JIT``. Compilation is timed
separately (first call) and excluded from the per-iteration figures.

Usage::

    python3 benchmarks/bench_backends.py --n 10 --m 5 --k 3 --iters 300
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from approxfa import SolverConfig, default_init, run
from approxfa.models import GeneratorSpec, generate_sigma
from approxfa.solvers import SingularPattern

n, m, k, iters, repeats = map(int, sys.argv[1:6])
S = generate_sigma(GeneratorSpec(n, m, c=2.0, seed=0))[0].entries
init = default_init(S, k, 0)
cfg = SolverConfig(max_iters=iters, div_tol=1e-300, residual_tol=1e-300)
out = {}
for engine in ("alt", "lpd", "hh", "em", "singular"):
    kw = {"pattern": SingularPattern(n - 1, 1)} if engine == "singular" else {}
    t0 = time.perf_counter()
    run(engine, S, init, SolverConfig(max_iters=2), **kw)
    first = time.perf_counter() - t0
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        tr = run(engine, S, init, cfg, **kw)
        best = min(best, time.perf_counter() - t0)
    out[engine] = {"first_call_s": first, "per_iter_us": 1e6 * best / tr.n_iter}
print(json.dumps(out))
"""


def measure(disable_jit, args):
    env = dict(os.environ, APPROXFA_DISABLE_JIT="1" if disable_jit else "0")
    cmd = [sys.executable, "-c", WORKER, *map(str, (args.n, args.m, args.k, args.iters, args.repeats))]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)

    jit, numpy_only = measure(False, args), measure(True, args)
    print(f"n={args.n} m={args.m} k={args.k}, {args.iters} iterations, best of {args.repeats}")
    print(f"{'engine':<10}{'numba us/it':>14}{'numpy us/it':>14}{'speedup':>10}{'compile s':>12}")
    for engine, j in jit.items():
        q = numpy_only[engine]
        print(f"{engine:<10}{j['per_iter_us']:>14.1f}{q['per_iter_us']:>14.1f}"
              f"{q['per_iter_us'] / j['per_iter_us']:>10.2f}{j['first_call_s']:>12.2f}")


if __name__ == "__main__":
    main()
