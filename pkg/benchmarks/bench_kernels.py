"""Time the compiled likelihood kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--models 1000] [--tau 100] [--repeat 20]

Both backends are checked to agree before anything is timed.
"""
import argparse
import timeit

import numpy as np

from jointpred import _backend, _kernels_py
from jointpred.likelihood import draw_hyperplanes


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--models", type=int, default=1000)
    ap.add_argument("--tau", type=int, default=100)
    ap.add_argument("--classes", type=int, default=2)
    ap.add_argument("--hyperplanes", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    if _backend.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install --no-build-isolation -e .` first")

    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.full(args.classes, 0.5), size=(args.models, args.tau))
    labels = rng.integers(0, args.classes, args.tau)
    a, b = draw_hyperplanes(args.hyperplanes, args.tau * args.classes, 1)
    p = np.linspace(1e-12, 1 - 1e-12, 100_000)

    cases = {
        "ndtri (1e5 points)": lambda k: k.ndtri(p),
        "mc_log_likelihood": lambda k: k.mc_log_likelihood(probs, labels),
        "partition_log_likelihood": lambda k: k.partition_log_likelihood(probs, labels, a, b, 1e-6),
    }
    backends = {"numpy": _kernels_py, "cython": _backend.compiled}

    for name, fn in cases.items():
        ref, got = fn(_kernels_py), fn(_backend.compiled)
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12, err_msg=name)

    print(f"M={args.models} tau={args.tau} K={args.classes} d={args.hyperplanes}, best of {args.repeat}")
    print(f"{'kernel':28s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases.items():
        ms = {}
        for label, k in backends.items():
            ms[label] = 1e3 * min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
        print(f"{name:28s} {ms['numpy']:10.2f} {ms['cython']:10.2f} {ms['numpy'] / ms['cython']:7.1f}x")


if __name__ == "__main__":
    main()
