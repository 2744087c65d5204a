"""Weak-scaling benchmark of the heat solver."""
import csv
import time

import numpy as np
from scipy.stats import binom

from .grid import finalize_global_grid, init_global_grid
from .halo import update_halo
from .heat3d import initial_temperature, spacing, stable_dt, step
from .overlap import cap_widths, hide_communication

CSV_COLUMNS = ["ranks", "median_secs", "ci_low", "ci_high", "efficiency"]


def median_ci(samples, confidence=0.95):
    """Median with a distribution-free confidence interval.

    The bounds are order statistics chosen from the Binomial(n, 1/2)
    distribution of the number of samples below the true median.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    k = int(binom.ppf((1 - confidence) / 2, n, 0.5))
    lo = x[max(k - 1, 0)]
    hi = x[min(n - k, n - 1)]
    return float(np.median(x)), float(lo), float(hi)


def bench_rank(comm, params, samples=20, warmup=1, hide_comm=None, dims=None, overlap=2):
    """Time ``samples`` blocks of ``params.nt`` iterations on one rank.

    Returns the per-iteration time of each block, taken as the slowest
    rank's block time divided by ``nt``.
    """
    grid = init_global_grid(params.nx, params.ny, params.nz, comm=comm, dims=dims, overlap=overlap)
    try:
        dx, dy, dz = spacing(params, grid)
        T = initial_temperature(params, grid)
        T2 = T.copy()
        Ci = np.ones(grid.n) / params.c0
        dt = stable_dt(params, Ci, grid)
        widths = cap_widths(hide_comm, T.shape) if hide_comm is not None else None

        def iterate(T, T2):
            for _ in range(params.nt):
                def compute(region, T=T, T2=T2):
                    step(T2, T, Ci, params.lam, dt, dx, dy, dz, region)

                if widths is None:
                    compute(None)
                    update_halo(grid, T2)
                else:
                    hide_communication(grid, widths, compute, T2)
                T, T2 = T2, T
            return T, T2

        for _ in range(warmup):
            T, T2 = iterate(T, T2)
        out = []
        for _ in range(samples):
            comm.barrier()
            t0 = time.perf_counter()
            T, T2 = iterate(T, T2)
            elapsed = time.perf_counter() - t0
            out.append(comm.allreduce(elapsed, "max") / params.nt)
        return out
    finally:
        finalize_global_grid(grid)


def summarize(samples_by_ranks, confidence=0.95):
    """Rows of ``CSV_COLUMNS``; efficiency is relative to the 1-rank median."""
    rows = []
    base = None
    if 1 in samples_by_ranks:
        base = median_ci(samples_by_ranks[1], confidence)[0]
    for ranks in sorted(samples_by_ranks):
        med, lo, hi = median_ci(samples_by_ranks[ranks], confidence)
        eff = base / med if base is not None else float("nan")
        rows.append((ranks, med, lo, hi, eff))
    return rows


def write_csv(path_or_file, rows):
    def emit(f):
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for ranks, med, lo, hi, eff in rows:
            writer.writerow([ranks, f"{med:.9e}", f"{lo:.9e}", f"{hi:.9e}", f"{eff:.6f}"])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as f:
            emit(f)
