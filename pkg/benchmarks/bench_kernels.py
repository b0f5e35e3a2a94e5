"""Timing comparison of the two patch-fitting kernel backends.

The patch kernel (membership growth + design pseudo-inverse per vertex)
dominates recovery setup time, so it is the piece worth compiling. Run:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

from trihess import _ppr_numpy
from trihess.fem import FESpace
from trihess.mesh import generate_uniform

try:
    from trihess import _ppr_core
except ImportError:
    _ppr_core = None

CASES = [
    ("regular", 40, 1),
    ("regular", 80, 1),
    ("crisscross", 40, 1),
    ("chevron", 80, 1),
    ("regular", 40, 2),
]


def kernel_args(pattern, n, k):
    mesh = generate_uniform(pattern, n)
    space = FESpace(mesh, k)
    indptr, data = mesh.vertex_to_elements
    return (mesh.nodes, mesh.triangles, indptr, data,
            space.dof_coords, space.elem_dofs, k + 1)


def best_of(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    opts = ap.parse_args()

    print(f"{'case':24s} {'vertices':>9s} {'numpy':>10s} "
          f"{'compiled':>10s} {'speedup':>8s}")
    for pattern, n, k in CASES:
        args = kernel_args(pattern, n, k)
        label = f"{pattern} n={n} k={k}"
        t_ref = best_of(_ppr_numpy.batch_patch_pinv, args, opts.repeats)
        if _ppr_core is None:
            print(f"{label:24s} {len(args[0]):9d} {t_ref * 1e3:8.1f}ms "
                  f"{'n/a':>10s} {'n/a':>8s}")
            continue
        t_c = best_of(_ppr_core.batch_patch_pinv, args, opts.repeats)
        print(f"{label:24s} {len(args[0]):9d} {t_ref * 1e3:8.1f}ms "
              f"{t_c * 1e3:8.1f}ms {t_ref / t_c:7.1f}x")
    if _ppr_core is None:
        print("\ncompiled extension not available; only the reference "
              "backend was timed")


if __name__ == "__main__":
    main()
