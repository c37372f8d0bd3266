"""Compare the numba kernels against the numpy fallback.

Part 1 times each kernel directly at several array sizes (both backends are
importable side by side).  Part 2 runs the same short training job in two
subprocesses, one with ``ICPD_DISABLE_NUMBA=1``, so the env flag is exercised
the way users set it.

    python3 benchmarks/bench_kernels.py [--sizes 1000 100000] [--repeat 20]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from icpd import kernels


def _args_for(name, n, rng):
    x, g, m, v, m2 = (rng.standard_normal(n) for _ in range(5))
    v = np.abs(v)
    if name == "sign_step":
        return (x, g, 0.01)
    if name == "adam_icp":
        return (x, g, m, v, 0.01, 0.9, 0.999, 0.1, 0.0316, 1e-8)
    if name == "ademamix_icp":
        return (x, g, m, m2, v, 0.01, 0.9, 0.999, 0.9999, 5.0, 0.1, 0.0316, 1e-8)
    if name == "tanh_grad":
        return (np.tanh(x), g)
    if name == "relu_grad":
        return (x, g)
    if name == "sgd_momentum_":
        return (x, g, m, 0.05, 0.9)
    if name == "adam_param_":
        return (x, g, m, v, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8)
    raise KeyError(name)


KERNELS = ("sign_step", "adam_icp", "ademamix_icp", "tanh_grad", "relu_grad",
           "sgd_momentum_", "adam_param_")

E2E = """
import time
from icpd import kernels
from icpd.harness.config import config_from_dict
from icpd.harness.train import train
cfg = config_from_dict({"epochs": 10, "schedule": {"k": 2},
                        "perturb": {"variant": "ademamix-icp", "steps": 5}})
train(cfg)  # warm-up (numba compile / cache load)
t = time.perf_counter(); train(cfg); print(kernels.BACKEND, time.perf_counter() - t)
"""


def bench_kernels(sizes, repeat):
    if not kernels.HAS_NUMBA:
        print("numba is not installed; only the numpy path is available")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'size':>10}{'numpy us':>12}{'numba us':>12}{'speedup':>9}")
    for name in KERNELS:
        for n in sizes:
            args = _args_for(name, n, rng)
            times = {}
            for label, ns in (("numpy", kernels.numpy_kernels), ("numba", kernels.numba_kernels)):
                fn = getattr(ns, name)
                fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])  # compile
                # in-place kernels mutate their inputs; copies keep every call on equal footing
                t = timeit.repeat(lambda: fn(*[a.copy() if isinstance(a, np.ndarray) else a
                                               for a in args]), number=1, repeat=repeat)
                times[label] = min(t) * 1e6
            print(f"{name:<16}{n:>10}{times['numpy']:>12.1f}{times['numba']:>12.1f}"
                  f"{times['numpy'] / times['numba']:>9.2f}")


def bench_end_to_end():
    print("\nend-to-end: 10-epoch ICP training run (2 baseline + 8 distillation epochs)")
    for flag in ("0", "1"):
        env = dict(os.environ, ICPD_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True,
                             check=True)
        backend, seconds = out.stdout.split()
        print(f"  ICPD_DISABLE_NUMBA={flag}: backend={backend:<6} {float(seconds):.3f}s")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 10_000, 1_000_000])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--skip-e2e", action="store_true")
    a = p.parse_args(argv)
    bench_kernels(a.sizes, a.repeat)
    if not a.skip_e2e:
        bench_end_to_end()


if __name__ == "__main__":
    main()
