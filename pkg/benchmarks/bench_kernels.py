"""Compare the compiled and numpy window kernels.

    python3 benchmarks/bench_kernels.py [--repeats 200]

Times one fused loss-and-gradient call per backend for a few problem sizes,
then a short training run with each backend.
"""

import argparse
import time

import numpy as np

from stic import backend
from stic.datagen import GeneratorSpec, generate
from stic.trainer import TrainConfig, train

SIZES = [(3, 200, 2), (5, 1000, 3), (10, 1000, 5), (20, 2000, 9)]


def time_call(fn, repeats):
    fn()
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--epochs", type=int, default=300)
    args = parser.parse_args()

    names = ["python"] + (["compiled"] if backend.NAME == "compiled" else [])
    if len(names) == 1:
        print("compiled extension not built; timing the numpy kernels only")

    print(f"{'d':>3} {'c':>6} {'w':>3} " + " ".join(f"{n:>12}" for n in names) + "   speedup")
    rng = np.random.default_rng(0)
    for d, c, w in SIZES:
        windows = rng.standard_normal((c, d, w))
        targets = rng.standard_normal((c, d))
        kernels = rng.uniform(-1, 1, (1, d, w))
        slopes = np.array([0.25])
        effects = rng.uniform(-1, 1, (d, d, w))
        times = [time_call(lambda k=backend.get(n): k.window_loss(windows, targets, kernels, slopes, effects),
                           args.repeats) for n in names]
        speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else ""
        print(f"{d:>3} {c:>6} {w:>3} " + " ".join(f"{t * 1e3:10.3f}ms" for t in times) + "  " + speed)

    X, _ = generate(GeneratorSpec(5, 1000, rng_seed=0))
    for n in names:
        start = time.perf_counter()
        train(X, TrainConfig(max_epochs=args.epochs, patience=10**9, kernel_backend=n))
        elapsed = time.perf_counter() - start
        print(f"train d=5 T=1000 {args.epochs} epochs [{n}]: {elapsed:.2f}s ({elapsed / args.epochs * 1e3:.2f} ms/epoch)")


if __name__ == "__main__":
    main()
