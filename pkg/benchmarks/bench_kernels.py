"""Time the level recursion with the compiled and pure-Python backends.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
from __future__ import annotations

import argparse
import timeit

from centipede import _backend, dch_solve, experiment_games, poisson_prior, qdch_solve


def cases():
    game = experiment_games()["exponential-4"]
    for k_max in (10, 50):
        prior = poisson_prior(2.6, k_max)
        for form in ("dr", "rs", "fs"):
            yield f"dch  {form} K={k_max}", lambda f=form, p=prior: dch_solve(game, f, p)
            yield f"qdch {form} K={k_max}", lambda f=form, p=prior: qdch_solve(game, f, p, 0.05)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    names = sorted(_backend.BACKENDS)
    if "cython" not in names:
        print("compiled backend not built; only timing the Python fallback")
    print(f"{'case':<18}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    previous = _backend.NAME
    try:
        for label, fn in cases():
            times = {}
            for name in names:
                _backend.use(name)
                fn()  # warm up
                times[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            row = f"{label:<18}" + "".join(f"{times[n] * 1e3:>10.3f}ms" for n in names)
            if len(names) > 1:
                row += f"{times['python'] / times['cython']:>11.1f}x"
            print(row)
    finally:
        _backend.use(previous)


if __name__ == "__main__":
    main()
