#!/usr/bin/env python3
"""Compare the compiled sliding-window kernels against the numpy fallback.

Times gather_windows / scatter_windows on encoder-shaped workloads for both
backends and prints the speedup, plus an end-to-end model forward for each
backend (spawned in subprocesses so the RESEP_KERNELS import-time switch
takes effect).

Usage:
    python3 benchmarks/kernel_backends.py [--repetitions N] [--skip-model]
"""

import argparse
import json
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from resep.kernels import BACKEND, _fallback, num_windows

try:
    from resep.kernels import _core
except ImportError:
    _core = None

# (T, K, S, F): encoder front-ends and 50%-overlap chunking shapes
WORKLOADS = [
    ("encoder 8s", 64000, 16, 8, 1),
    ("encoder 64s", 512000, 16, 8, 1),
    ("chunking 8s", 8000, 150, 75, 128),
    ("chunking 64s", 64000, 150, 75, 128),
]


def time_backend(impl, T, K, S, F, repetitions):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal((T, F)))
    Nw = num_windows(T, K, S)
    gathered = np.empty((Nw, K, F))
    scattered = np.zeros((T, F))

    def run_gather():
        impl.gather_windows(x, K, S, gathered)

    def run_scatter():
        scattered[:] = 0.0
        impl.scatter_windows(gathered, S, scattered)

    out = {}
    for name, fn in (("gather", run_gather), ("scatter", run_scatter)):
        fn()  # warmup
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        out[name] = statistics.median(times)
    return out


def bench_kernels(repetitions):
    print(f"active backend in this process: {BACKEND}")
    if _core is None:
        print("compiled extension unavailable; timing the fallback only\n")
    header = f"{'workload':<14}{'op':<9}{'python (ms)':>12}{'compiled (ms)':>14}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, T, K, S, F in WORKLOADS:
        py = time_backend(_fallback, T, K, S, F, repetitions)
        cy = time_backend(_core, T, K, S, F, repetitions) if _core else None
        for op in ("gather", "scatter"):
            if cy:
                speed = py[op] / cy[op]
                print(
                    f"{label:<14}{op:<9}{py[op]*1e3:>12.3f}{cy[op]*1e3:>14.3f}{speed:>8.2f}x"
                )
            else:
                print(f"{label:<14}{op:<9}{py[op]*1e3:>12.3f}{'-':>14}{'-':>9}")


_MODEL_SNIPPET = """
import json, time
import numpy as np
from resep.kernels import BACKEND
from resep.model import ModelConfig, SeparationModel
from resep.tensor import Tensor

cfg = ModelConfig(encoder_filters=64, heads=2, intra_layers=1, memory_layers=1,
                  d_ff_intra=256, d_ff_memory=256)
model = SeparationModel(cfg, seed=0, dtype=np.float32)
x = Tensor(np.random.default_rng(1).standard_normal(8 * 8000).astype(np.float32))
model.separate(x)
t0 = time.perf_counter()
model.separate(x)
print(json.dumps({"backend": BACKEND, "seconds": time.perf_counter() - t0}))
"""


def bench_model():
    print("\nend-to-end forward (8 s input, width-reduced config, float32):")
    for backend in ("python", "compiled"):
        env = dict(os.environ, RESEP_KERNELS=backend)
        proc = subprocess.run(
            [sys.executable, "-c", _MODEL_SNIPPET], env=env, capture_output=True, text=True
        )
        if proc.returncode != 0:
            print(f"  {backend:<9} unavailable ({proc.stderr.strip().splitlines()[-1]})")
            continue
        row = json.loads(proc.stdout)
        print(f"  {row['backend']:<9} {row['seconds']*1e3:8.1f} ms")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repetitions", type=int, default=20)
    parser.add_argument("--skip-model", action="store_true", help="kernel micro-bench only")
    args = parser.parse_args()
    bench_kernels(args.repetitions)
    if not args.skip_model:
        bench_model()


if __name__ == "__main__":
    main()
