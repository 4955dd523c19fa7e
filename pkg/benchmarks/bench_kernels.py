"""Compare the compiled and numpy regression kernels.

    python benchmarks/bench_kernels.py [--sizes 200 2000 20000] [--repeat 5]

Prints the best-of-``repeat`` wall time per call for ``mixture_forward`` and
``objective_grad`` under each available backend, plus the speedup.
"""
import argparse
import timeit

import numpy as np

from hora import _kernels_py

try:
    from hora import _kernels as _compiled
except ImportError:
    _compiled = None


def problem(n, H=2, L=3, d=2, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.uniform(-1, 1, (n, d)), rng.normal(size=(n, d)), rng.dirichlet(np.ones(H)), rng.normal(size=L),
            rng.normal(size=(H, L, d, d)), rng.normal(size=(H, L, d, d)))


def best_time(fn, repeat):
    fn()  # warm up
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 2000, 20000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = {"python": _kernels_py}
    if _compiled is not None:
        backends["compiled"] = _compiled
    else:
        print("compiled extension not importable; timing the numpy backend only")

    print(f"{'kernel':<16}{'n':>8}" + "".join(f"{b + ' ms':>14}" for b in backends) + f"{'speedup':>10}")
    for n in args.sizes:
        X, Y, pi, c, S, V = problem(n)
        for name, call in (("mixture_forward", lambda m: m.mixture_forward(X, pi, c, S, V)),
                           ("objective_grad", lambda m: m.objective_grad(X, Y, pi, c, S, V, True))):
            times = {b: best_time(lambda m=m: call(m), args.repeat) for b, m in backends.items()}
            speed = f"{times['python'] / times['compiled']:>9.1f}x" if "compiled" in times else f"{'-':>10}"
            print(f"{name:<16}{n:>8}" + "".join(f"{1e3 * t:>14.3f}" for t in times.values()) + speed)


if __name__ == "__main__":
    main()
