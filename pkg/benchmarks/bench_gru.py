"""Compare the compiled and numpy GRU recurrence kernels.

    python3 benchmarks/bench_gru.py [--repeat 20]
"""

import argparse
import time

import numpy as np

from awebench.nncore import gru


def bench(backend, T, B, h, repeat):
    rng = np.random.default_rng(0)
    gx = rng.normal(size=(T, B, 3 * h))
    u = rng.normal(scale=0.1, size=(h, 3 * h))
    mask = np.ones((T, B))
    h0 = np.zeros((B, h))
    kern = gru.kernels_for(backend)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        H, Z, R, N = kern.gru_forward(gx, u, mask, h0)
        kern.gru_backward(np.ones_like(H), u, mask, h0, H, Z, R, N)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = ["numpy"] + (["compiled"] if gru.compiled_available() else [])
    print(f"{'T':>4} {'B':>4} {'h':>4} " + " ".join(f"{b:>12}" for b in backends) + "  speedup")
    for T, B, h in [(10, 4, 8), (25, 32, 64), (25, 64, 64), (50, 64, 128)]:
        times = [bench(b, T, B, h, args.repeat) for b in backends]
        ratio = times[0] / times[-1] if len(times) > 1 else 1.0
        print(f"{T:>4} {B:>4} {h:>4} " + " ".join(f"{t * 1e3:10.3f}ms" for t in times)
              + f"  {ratio:6.2f}x")


if __name__ == "__main__":
    main()
