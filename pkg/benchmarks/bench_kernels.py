"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 12,1024,100000]

Training calls these on group-sized inputs (12 samples), where per-call
overhead dominates. At large sizes numpy's vectorised comparisons can win for
sparse_rewards.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from guire import _pykernels
from guire.kernels import compiled


def cases(n: int, rng: np.random.Generator):
    xs = rng.integers(0, 1000, n)
    ys = rng.integers(0, 1000, n)
    box = (400, 400, 430, 430)
    cells = 1024 if n < 1024 else n
    logits = rng.normal(size=cells)
    mask = rng.random(cells) < 0.9
    mask[0] = True
    probs = _pykernels.masked_softmax(logits, 1.0, mask)
    idx = rng.integers(0, cells, n)
    w = rng.normal(size=n)
    out = np.zeros(cells)
    return {
        "dense_rewards": lambda k: k.dense_rewards(xs, ys, box, 0.5),
        "sparse_rewards": lambda k: k.sparse_rewards(xs, ys, box),
        "masked_softmax": lambda k: k.masked_softmax(logits, 1.0, mask),
        "accumulate_logprob_grad": lambda k: k.accumulate_logprob_grad(out, probs, idx, w, 1.0),
    }


def bench(fn, repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--sizes", default="12,1024,100000")
    args = p.parse_args(argv)

    ck = compiled()
    if ck is None:
        print("compiled extension not built; only the numpy fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'n':>8}{'numpy (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, call in cases(n, rng).items():
            py = bench(lambda: call(_pykernels), args.repeat) * 1e6
            if ck is None:
                print(f"{name:<26}{n:>8}{py:>14.2f}{'-':>14}{'-':>10}")
                continue
            cy = bench(lambda: call(ck), args.repeat) * 1e6
            print(f"{name:<26}{n:>8}{py:>14.2f}{cy:>14.2f}{py / cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
