#!/usr/bin/env python3
"""Time the jitted kernels against the pure-numpy fallback.

The execution path is fixed at import time by the ``SPAL_PURE_NUMPY``
environment flag, so a fair comparison needs two fresh interpreters.  This
script re-invokes itself twice as a child (once per path), collects JSON
timings from each, and prints a table with the speedup.  Each child warms
its path up with a short run first, so jit compilation time is reported
separately rather than polluting the steady-state rate.

Usage::

    python3 benchmarks/kernel_bench.py [--steps 20000] [--dim 80] [--m 20]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def build_problem(dim, m, seed):
    from spal.benchmarks import gen_nonconvex_qp

    return gen_nonconvex_qp(dim, m, seed=seed).problem


def child_main(args) -> int:
    import numpy as np

    import spal._kernels as kernels
    from spal.oracles import AdditiveNoiseOracle
    from spal.solvers import (derive_params_alg1, derive_params_storm,
                              run_alg1, run_alg3)

    problem = build_problem(args.dim, args.m, args.seed)
    oracle = AdditiveNoiseOracle(problem.objective, sigma=args.sigma)
    out = {"jit": kernels.USING_NUMBA, "runs": {}}

    for algorithm, runner, derive in (
        ("alg1", run_alg1, derive_params_alg1),
        ("alg3", run_alg3, derive_params_storm),
    ):
        if algorithm == "alg1":
            params = derive(problem.objective.l_f, problem.norm_A,
                            oracle.sigma2, 1.0, args.steps)
        else:
            params = derive(problem.objective.l_f, problem.norm_A,
                            oracle.sigma2, 1.0).override(T=args.steps)
        # first call pays any compilation; time it apart from steady state
        warm = params.override(T=min(600, args.steps))
        t0 = time.perf_counter()
        runner(problem, oracle, warm, seed=args.seed)
        warm_s = time.perf_counter() - t0

        best = float("inf")
        for _ in range(args.repeat):
            result = runner(problem, oracle, params, seed=args.seed)
            if not result.used_kernels:
                raise SystemExit("run fell off the kernel fast path")
            best = min(best, result.wallclock)
        out["runs"][algorithm] = {
            "seconds": best,
            "steps_per_s": args.steps / best,
            "first_call_s": warm_s,
        }

    # microbenchmark one projection-heavy helper on its own
    rng = np.random.default_rng(args.seed)
    Q = np.diag(rng.uniform(0.5, 4.0, args.dim))
    c = rng.standard_normal(args.dim)
    lo, hi = -np.ones(args.dim), np.ones(args.dim)
    pgd_args = (Q, c, np.zeros((0, args.dim)), np.zeros(0), 0.0, 0.0,
                np.zeros(args.dim), 0.0, np.zeros(args.dim),
                kernels.SET_BOX, lo, hi, 0.0, 0.25, 0.0, 400,
                np.zeros(args.dim))
    kernels.pgd_quadratic(*pgd_args)  # warm
    t0 = time.perf_counter()
    for _ in range(20):
        kernels.pgd_quadratic(*pgd_args)
    out["runs"]["pgd_quadratic"] = {
        "seconds": (time.perf_counter() - t0) / 20,
        "steps_per_s": 400 * 20 / (time.perf_counter() - t0),
        "first_call_s": 0.0,
    }

    json.dump(out, sys.stdout)
    return 0


def run_child(pure: bool, argv) -> dict:
    env = {k: v for k, v in os.environ.items() if k != "SPAL_PURE_NUMPY"}
    if pure:
        env["SPAL_PURE_NUMPY"] = "1"
    cmd = [sys.executable, os.path.abspath(__file__), "--as-child", *argv]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if res.returncode != 0:
        sys.stderr.write(res.stderr)
        raise SystemExit(f"child ({'pure' if pure else 'jit'}) failed")
    return json.loads(res.stdout)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="compare jitted and pure-numpy kernel paths")
    parser.add_argument("--steps", type=int, default=20_000)
    parser.add_argument("--dim", type=int, default=80)
    parser.add_argument("--m", type=int, default=20)
    parser.add_argument("--sigma", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--as-child", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args.as_child:
        return child_main(args)

    passthrough = ["--steps", str(args.steps), "--dim", str(args.dim),
                   "--m", str(args.m), "--sigma", str(args.sigma),
                   "--seed", str(args.seed), "--repeat", str(args.repeat)]
    print(f"timing {args.steps} steps on a {args.dim}-dim QP with "
          f"{args.m} constraints (best of {args.repeat}) ...")
    jit = run_child(False, passthrough)
    pure = run_child(True, passthrough)
    if not jit["jit"]:
        print("note: numba unavailable; both columns ran the plain path")

    header = f"{'kernel':<16}{'jit s':>10}{'pure s':>10}{'speedup':>9}" \
             f"{'jit first-call s':>18}"
    print(header)
    print("-" * len(header))
    for name in jit["runs"]:
        a, b = jit["runs"][name], pure["runs"][name]
        print(f"{name:<16}{a['seconds']:>10.4f}{b['seconds']:>10.4f}"
              f"{b['seconds'] / a['seconds']:>8.1f}x"
              f"{a['first_call_s']:>18.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
