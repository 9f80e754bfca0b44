"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Shapes match one default-config forward pass over a 16-node zoom graph:
32x32 inputs, 3x3 convolutions with filters 8/16/32 and 2x2 pooling.
"""

import argparse
import timeit

import numpy as np

from hierzoom import _pykernels, kernels


def cases(rng):
    x1 = rng.random((16, 1, 34, 34))
    x2 = rng.random((16, 8, 18, 18))
    cols = rng.random((16 * 16 * 16, 8 * 9))
    pool_in = rng.random((16, 16, 16, 16))
    _, arg = _pykernels.maxpool_forward(pool_in, 2)
    g = rng.random((16, 16, 8, 8))
    crop = rng.random((85, 85))
    return {
        "im2col 1->32x32": lambda k: k.im2col(x1, 3, 1, 32, 32),
        "im2col 8->16x16": lambda k: k.im2col(x2, 3, 1, 16, 16),
        "col2im 8->16x16": lambda k: k.col2im(cols, 16, 8, 18, 18, 3, 1, 16, 16),
        "maxpool fwd": lambda k: k.maxpool_forward(pool_in, 2),
        "maxpool bwd": lambda k: k.maxpool_backward(g, arg, 2),
        "resize 85->32": lambda k: k.resize_bilinear(crop, 32, 32),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if kernels.compiled is None:
        print("compiled extension not built; only the numpy fallback is available")
    backends = [("python", _pykernels)] + ([("cython", kernels.compiled)] if kernels.compiled else [])
    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name, _ in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label, fn in cases(np.random.default_rng(0)).items():
        times = [min(timeit.repeat(lambda: fn(mod), number=args.repeat, repeat=3)) / args.repeat for _, mod in backends]
        row = f"{label:<18}" + "".join(f"{t * 1e6:>10.1f}us" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:>11.2f}x"
        print(row)


if __name__ == "__main__":
    main()
