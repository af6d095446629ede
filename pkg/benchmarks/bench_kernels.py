"""Compare the compiled and pure-Python kernels on the per-opportunity hot path.

    python3 benchmarks/bench_kernels.py [--repeat 2000]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from erach import _pykernels

try:
    from erach import _ckernels
except ImportError:
    _ckernels = None


def cases(rng, J=5, K=2, P=2, dim=12, hidden=128):
    dims = [dim, hidden, hidden, K + 1]
    weights = [rng.normal(size=(J, a, b)) * 0.1 for a, b in zip(dims[:-1], dims[1:])]
    biases = [rng.normal(size=(J, b)) * 0.1 for b in dims[1:]]
    X = rng.normal(size=(J, dim))
    choices = rng.integers(0, K + 1, size=J)
    preambles = np.where(choices > 0, rng.integers(1, P + 1, size=J), 0)
    probs = rng.dirichlet(np.ones(K + 1), size=J)
    u = rng.random(J)
    return {
        "resolve_collisions": lambda m: m.resolve_collisions(choices, preambles, P),
        "stacked_logits": lambda m: m.stacked_logits(X, weights, biases),
        "sample_categorical": lambda m: m.sample_categorical(probs, u),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--uts", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    fns = cases(np.random.default_rng(0), J=args.uts)
    print(f"{'kernel':22s}" + "".join(f"{b:>14s}" for b in backends) + ("      speedup" if len(backends) > 1 else ""))
    for name, fn in fns.items():
        times = {}
        for b, mod in backends.items():
            fn(mod)
            times[b] = min(timeit.repeat(lambda: fn(mod), number=args.repeat, repeat=3)) / args.repeat
        line = f"{name:22s}" + "".join(f"{times[b] * 1e6:11.2f} us" for b in backends)
        if len(backends) > 1:
            line += f"{times['python'] / times['cython']:12.1f}x"
        print(line)
    if _ckernels is None:
        print("compiled extension not built; only the Python backend was timed")


if __name__ == "__main__":
    main()
