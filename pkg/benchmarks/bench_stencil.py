"""Stencil throughput: numba kernels against the numpy fallback.

    python benchmarks/bench_stencil.py [--sizes 65 129 257] [--repeat 50]

Prints one line per grid with the mean time per operator application and the
largest difference between the two backends (expected to be exactly zero).
"""

import argparse
import time

import numpy as np

from elastogauge.experiments import riemannian_setup
from elastogauge.solver.grid import Grid
from elastogauge.solver.stencil import DiscreteElasticLaplacian


def time_apply(op, u, repeat):
    op.apply_flux_divergence(u)  # warm-up (and JIT compile for numba)
    t0 = time.perf_counter()
    for _ in range(repeat):
        op.apply_flux_divergence(u)
    return (time.perf_counter() - t0) / repeat


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[65, 129, 257])
    parser.add_argument("--repeat", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    setup = riemannian_setup()
    rng = np.random.default_rng(args.seed)
    print(f"{'nx':>6} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'max diff':>10}")
    for nx in args.sizes:
        grid = Grid(setup.domain, nx)
        u = rng.standard_normal((grid.n,) + grid.nx)
        ops = {b: DiscreteElasticLaplacian(setup.triple, grid, backend=b) for b in ("numpy", "numba")}
        t = {b: time_apply(op, u, args.repeat) for b, op in ops.items()}
        diff = np.abs(ops["numpy"].apply_flux_divergence(u) - ops["numba"].apply_flux_divergence(u)).max()
        print(f"{nx:>6} {1e3 * t['numpy']:>10.3f} {1e3 * t['numba']:>10.3f} "
              f"{t['numpy'] / t['numba']:>8.2f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
