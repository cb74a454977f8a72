"""Time the compiled kernels against the numpy fallback on training shapes.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--dtype float32]
"""

import argparse
import time

import numpy as np

from mlvae.nd.kernels import numpy_backend

try:
    from mlvae.nd.kernels import _fastcore
except ImportError:
    _fastcore = None


def timeit(fn, repeat):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = ap.parse_args()
    dt = np.dtype(args.dtype)
    rng = np.random.default_rng(0)

    # word-LSTM shapes from the default configuration: 32 docs x 10 sentences
    # of hidden size 256, a 20k x 128 embedding table, ~1.3M adam entries
    T, H = 320, 256
    z = rng.normal(size=(T, 4 * H)).astype(dt)
    c = rng.normal(size=(T, H)).astype(dt)
    dh = rng.normal(size=(T, H)).astype(dt)
    dc = rng.normal(size=(T, H)).astype(dt)
    table = np.zeros((20000, 128), dtype=dt)
    ids = rng.integers(0, 20000, size=8000).astype(np.int64)
    rows = rng.normal(size=(8000, 128)).astype(dt)
    p = rng.normal(size=(1024, 1280)).astype(dt)
    g = rng.normal(size=p.shape).astype(dt)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    def cases(impl):
        _, _, acts, tc = impl.lstm_gates_forward(z, c)
        return {
            "lstm_forward": lambda: impl.lstm_gates_forward(z, c),
            "lstm_backward": lambda: impl.lstm_gates_backward(dh, dc, np.asarray(acts), c, np.asarray(tc)),
            "scatter_add": lambda: impl.scatter_add_rows(table, ids, rows),
            "adam_step": lambda: impl.adam_step(
                p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001
            ),
        }

    impls = [("numpy", numpy_backend)] + ([("cython", _fastcore)] if _fastcore else [])
    results = {name: {k: timeit(fn, args.repeat) for k, fn in cases(impl).items()}
               for name, impl in impls}

    print(f"dtype={args.dtype} repeat={args.repeat}")
    header = f"{'kernel':<16}" + "".join(f"{name:>12}" for name, _ in impls)
    if _fastcore:
        header += f"{'speedup':>10}"
    print(header)
    for k in next(iter(results.values())):
        line = f"{k:<16}" + "".join(f"{results[n][k] * 1e3:>10.3f}ms" for n, _ in impls)
        if _fastcore:
            line += f"{results['numpy'][k] / results['cython'][k]:>9.1f}x"
        print(line)
    if _fastcore is None:
        print("compiled backend not available; showing numpy only")


if __name__ == "__main__":
    main()
