"""Compare the numba and pure-numpy kernel paths.

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--steps 200]

Times the two pointwise kernels on random fields and a short stepper loop with
each backend, and checks both paths agree.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from polyblend import kernels
from polyblend.dynamics import ModelParams, Stepper, StepperConfig, initial_state
from polyblend.potential import PotentialParams
from polyblend.spectral import Grid

PARAMS = PotentialParams(1.0, 2.0, 1.0, 2.0, 0.1, 0.05, 0.05, 1e-3)


def best_of(fn, repeat=5, number=None):
    timer = timeit.Timer(fn)
    if number is None:
        number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def bench_kernels(n: int) -> None:
    rng = np.random.default_rng(n)
    # mostly interior values with a few points in the regularized tails
    u = rng.uniform(-1.05, 1.05, (n, n))
    v = rng.uniform(-1.05, 1.05, (n, n))
    pars = PARAMS.as_tuple()
    for name, fast, slow in (("potential_terms", kernels.potential_terms_numba, kernels.potential_terms_numpy),
                             ("hessian_bounds", kernels.hessian_bounds_numba, kernels.hessian_bounds_numpy)):
        a, b = fast(u, v, pars), slow(u, v, pars)
        agree = all(np.allclose(x, y, rtol=1e-12, atol=0.0) for x, y in zip(a, b))
        t_fast = best_of(lambda: fast(u, v, pars))
        t_slow = best_of(lambda: slow(u, v, pars))
        print(f"{name:16s} {n:4d}^2  numba {t_fast * 1e3:8.3f} ms  numpy {t_slow * 1e3:8.3f} ms"
              f"  speedup {t_slow / t_fast:5.1f}x  agree={agree}")


def bench_steps(n: int, steps: int) -> None:
    grid = Grid(n, n)
    p = ModelParams(1e-3, 1e-3, 0.5, 0.0, "conserved", PARAMS)
    s0 = initial_state(grid, "constant_plus_noise", 0.1, 0.0, 0.05, seed=1)
    finals = {}
    times = {}
    for use in (True, False):
        kernels.USE_NUMBA = use
        stepper = Stepper(p, StepperConfig(dt=1e-4))
        s = stepper.step(s0)  # warm-up (jit and cache)

        def loop():
            nonlocal s
            s = s0
            for _ in range(steps):
                s = stepper.step(s)

        times[use] = best_of(loop, repeat=3, number=1) / steps
        finals[use] = s
    kernels.USE_NUMBA = kernels.HAS_NUMBA and not kernels._flag_disabled()
    diff = max(np.max(np.abs(finals[True].u - finals[False].u)), np.max(np.abs(finals[True].v - finals[False].v)))
    print(f"{'step loop':16s} {n:4d}^2  numba {times[True] * 1e3:8.3f} ms  numpy {times[False] * 1e3:8.3f} ms"
          f"  speedup {times[False] / times[True]:5.1f}x  max diff {diff:.1e}")


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--steps", type=int, default=100)
    args = ap.parse_args(argv)
    if not kernels.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    for n in args.sizes:
        bench_kernels(n)
    for n in args.sizes:
        bench_steps(n, args.steps)


if __name__ == "__main__":
    main()
