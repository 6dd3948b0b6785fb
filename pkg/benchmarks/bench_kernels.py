"""Compare the compiled kernel backend against the pure-numpy one.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 200] [--end-to-end]

The kernel table is benchmarked in-process via ``available_backends()``.
``--end-to-end`` additionally times a full forward+backward pass of the
convolutional variant in two subprocesses, one per ``CAPSNEWS_KERNELS``
setting, since the backend binds at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from capsnews.kernels import available_backends

# shapes mirror the default convolutional configuration: 64 tokens of
# 100-d embeddings, 128 filters per width, plus the 32-filter capsule stem
CASES = [
    ("conv1d fwd 128x3x100", "conv1d_forward",
     lambda rng: (rng.standard_normal((64, 100)), rng.standard_normal((128, 3, 100)),
                  rng.standard_normal(128))),
    ("conv1d fwd 32x3x100", "conv1d_forward",
     lambda rng: (rng.standard_normal((64, 100)), rng.standard_normal((32, 3, 100)),
                  rng.standard_normal(32))),
    ("conv1d bwd 128x3x100", "conv1d_backward",
     lambda rng: (rng.standard_normal((64, 100)), rng.standard_normal((128, 3, 100)),
                  rng.standard_normal((62, 128)))),
    ("maxpool fwd 62x128", "maxpool_forward",
     lambda rng: (rng.standard_normal((62, 128)),)),
]


def bench_kernel(fn, args, repeat):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def run_kernel_table(repeat):
    backends = available_backends()
    names = list(backends)
    print(f"backends: {', '.join(names)}   (repeat={repeat})")
    header = f"{'kernel':<24}" + "".join(f"{n:>14}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, key, make in CASES:
        rng = np.random.default_rng(0)
        args = tuple(np.ascontiguousarray(a) for a in make(rng))
        times = [bench_kernel(backends[n][key], args, repeat) for n in names]
        row = f"{label:<24}" + "".join(f"{t * 1e6:>12.1f}us" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


_E2E_SNIPPET = r"""
import time
import numpy as np
from capsnews import kernels, tensor as T
from capsnews.capsules import margin_loss
from capsnews.embeddings import EmbeddedSequence
from capsnews.models import ModelConfig, build, forward

cfg = ModelConfig(variant="dcnn-capsnet", num_classes=2, class_names=("real", "fake"),
                  vocab=tuple(f"w{i}" for i in range(1000)), embed_dim=100, max_len=64,
                  routing_iterations=1, seed=0)
m = build(cfg)
rng = np.random.default_rng(0)
ids = rng.integers(2, 1002, size=64)
target = np.array([0.0, 1.0])

def step(i):
    m.zero_grads()
    x = T.gather_rows(m.table.matrix, ids)
    loss = margin_loss(forward(m, EmbeddedSequence(x, 64), training=True, rng=i), target)
    T.backward(loss)

step(0)
n = 30
t0 = time.perf_counter()
for i in range(n):
    step(i)
dt = (time.perf_counter() - t0) / n
print(f"{kernels.BACKEND} {dt * 1e3:.2f}")
"""


def run_end_to_end():
    print("\nfull forward+backward, convolutional variant, per example:")
    results = {}
    for backend in ("python", "c"):
        env = dict(os.environ, CAPSNEWS_KERNELS=backend)
        proc = subprocess.run([sys.executable, "-c", _E2E_SNIPPET],
                              capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            print(f"  {backend}: unavailable ({proc.stderr.strip().splitlines()[-1]})")
            continue
        name, ms = proc.stdout.split()
        assert name == backend
        results[backend] = float(ms)
        print(f"  {backend:<8}{results[backend]:>8.2f} ms")
    if len(results) == 2:
        print(f"  speedup {results['python'] / results['c']:.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--end-to-end", action="store_true",
                    help="also time a whole training step under each backend")
    args = ap.parse_args()
    run_kernel_table(args.repeat)
    if args.end_to_end:
        run_end_to_end()


if __name__ == "__main__":
    main()
