"""Compiled kernels against the interpreted fallback.

Runs each case in this process (numba, unless ODLAB_DISABLE_JIT is already
set) and again in a child process with ODLAB_DISABLE_JIT=1, then prints one
row per case.  Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from odlab import disk_scene, solve, solve_anisotropic_graph
from odlab._jit import JIT_ENABLED
from odlab.config import DEFAULT
from odlab.scene import MetricField, Scene
from odlab.singular import detect_singular_set, integrate_singular_flow


def _cases():
    scene = disk_scene()
    aniso = Scene(None, (0.0, 0.0), MetricField.constant([[2.0, 0.3], [0.3, 1.0]]),
                  ((-1.0, -1.0), (1.0, 1.0)))
    f = solve(scene, 0.04)
    return {
        "fmm disk h=0.04": lambda: solve(scene, 0.04),
        "fmm disk h=0.02": lambda: solve(scene, 0.02),
        "dijkstra anisotropic h=0.04": lambda: solve_anisotropic_graph(aniso, 0.04),
        "singular mask h=0.04": lambda: detect_singular_set(f, scene, DEFAULT),
        "flow arc h=0.04": lambda: integrate_singular_flow(f, scene, (-2.0, 0.0), 12.0, DEFAULT),
    }


def measure(repeat: int) -> dict:
    out = {}
    for name, fn in _cases().items():
        fn()  # warm-up: compilation, caches
        times = []
        for _ in range(repeat):
            t = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t)
        out[name] = float(np.median(times))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.repeat)))
        return
    fast = measure(args.repeat)
    env = dict(os.environ, ODLAB_DISABLE_JIT="1")
    res = subprocess.run([sys.executable, __file__, "--child", "--repeat", "1"], env=env,
                         capture_output=True, text=True, check=True)
    slow = json.loads(res.stdout.strip().splitlines()[-1])
    label = "numba" if JIT_ENABLED else "python"
    print(f"{'case':<30} {label:>10} {'python':>10} {'speedup':>8}")
    for name in fast:
        print(f"{name:<30} {fast[name]:>9.4f}s {slow[name]:>9.3f}s {slow[name] / fast[name]:>7.1f}x")


if __name__ == "__main__":
    main()
