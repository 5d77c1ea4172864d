"""Compare the numba and numpy kernel backends.

Times conv_forward, conv_transpose and weight_correlation on the toy and
faces geometries plus one full toy LCA solve per backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from deepsc import kernels
from deepsc.config import build_graph, load_config
from deepsc.data import generate_toy_corpus
from deepsc.hierarchy import solve_network
from deepsc.tensor import conv_forward, conv_transpose, random_kernel_stack, weight_correlation

CASES = {
    "toy_H1": (16, (1, 32, 32), (6, 6), 2),
    "faces_V1": (16, (3, 64, 64), (8, 8), 4),
    "text_T1": (16, (1, 16, 128), (8, 8), 4),
    "joint_full": (128, (16, 16, 16), "full", None),
}


def _stack(rng, features, shape, kernel, stride):
    if kernel == "full":
        kernel, stride = shape[1:], shape[1]
    return random_kernel_stack(rng, features, shape, kernel, stride)


def _time(fn, repeats):
    fn()
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main() -> None:
    parser = argparse.ArgumentParser(description="Benchmark numba vs numpy kernels")
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--solve-iterations", type=int, default=100)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'case':<12}{'op':<20}{'numba_ms':>10}{'numpy_ms':>10}{'speedup':>9}")
    for name, (features, shape, kernel, stride) in CASES.items():
        k = _stack(rng, features, shape, kernel, stride)
        x = rng.random(shape)
        a = rng.random(k.output_shape) * (rng.random(k.output_shape) < 0.2)
        ops = {
            "conv_forward": lambda: conv_forward(x, k),
            "conv_transpose": lambda: conv_transpose(a, k),
            "weight_correlation": lambda: weight_correlation(x, a, k),
        }
        for op, fn in ops.items():
            times = {}
            for backend in ("numba", "numpy"):
                kernels.set_backend(backend)
                times[backend] = _time(fn, args.repeats)
            print(f"{name:<12}{op:<20}{times['numba'] * 1e3:>10.3f}{times['numpy'] * 1e3:>10.3f}"
                  f"{times['numpy'] / times['numba']:>8.1f}x")

    graph = build_graph(load_config("toy"))
    sample = generate_toy_corpus(0).samples[0]
    times = {}
    for backend in ("numba", "numpy"):
        kernels.set_backend(backend)
        times[backend] = _time(lambda: solve_network(sample, graph, n_iterations=args.solve_iterations,
                                                     record_energy=False), 1)
    print(f"toy solve ({args.solve_iterations} iterations): numba {times['numba']:.3f}s "
          f"numpy {times['numpy']:.3f}s speedup {times['numpy'] / times['numba']:.1f}x")


if __name__ == "__main__":
    main()
