"""3-D heat diffusion on the implicit global grid.

Explicit 7-point stencil with fixed (Dirichlet) global boundaries: the
kernel never writes the outermost layers of a local array, so physical
boundaries keep their initial values and internal ones are refreshed by
the halo update.
"""
import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError
from .grid import finalize_global_grid, gather, global_coords, init_global_grid, nx_g, ny_g, nz_g
from .halo import update_halo
from .overlap import cap_widths, hide_communication
from .transport.inproc import run_inproc

FIELD_MAGIC = "IGRIDF1"
T0 = 1.7


@dataclass
class HeatParams:
    lam: float = 1.0  # thermal conductivity
    c0: float = 2.0  # heat capacity
    lx: float = 1.0
    ly: float = 1.0
    lz: float = 1.0
    nx: int = 32  # local grid points
    ny: int = 32
    nz: int = 32
    nt: int = 100
    init: str = "constant"  # constant | gaussian


@dataclass
class HeatResult:
    T: np.ndarray = None  # gathered on the root rank only
    timings: list = field(default_factory=list)  # (it, step_secs, halo_secs, total_secs)
    allocations: list = field(default_factory=list)  # pool counter after each iteration
    dt: float = 0.0
    global_n: tuple = ()
    dims: tuple = ()


def _interior(shape, region):
    """Intersect ``region`` with the interior ``1 .. s-2`` (0-based) of every axis."""
    if region is None:
        return tuple(slice(1, s - 1) for s in shape)
    out = []
    for r, s in zip(region, shape):
        start, stop, _ = r.indices(s)
        out.append(slice(max(start, 1), min(stop, s - 1)))
    return tuple(out)


def step(T2, T, Ci, lam, dt, dx, dy, dz, region=None):
    """One explicit diffusion step written into the interior of ``T2``.

    ``region`` (a tuple of slices) restricts which cells are written; it is
    clipped to the interior.
    """
    if T.shape != T2.shape or T.shape != Ci.shape:
        raise ShapeError(f"shape mismatch: T {T.shape}, T2 {T2.shape}, Ci {Ci.shape}")
    if min(T.shape) < 3:
        raise ShapeError(f"fields need at least 3 layers per axis, got {T.shape}")
    c = _interior(T.shape, region)
    if any(s.stop <= s.start for s in c):
        return
    x, y, z = c

    def shift(sl, k):
        return slice(sl.start + k, sl.stop + k)

    Tc = T[c]
    d2x = T[shift(x, 1), y, z] - 2 * Tc + T[shift(x, -1), y, z]
    d2y = T[x, shift(y, 1), z] - 2 * Tc + T[x, shift(y, -1), z]
    d2z = T[x, y, shift(z, 1)] - 2 * Tc + T[x, y, shift(z, -1)]
    T2[c] = Tc + dt * (lam * Ci[c] * (d2x / dx**2 + d2y / dy**2 + d2z / dz**2))


def spacing(params, grid):
    return (
        params.lx / (nx_g(grid) - 1),
        params.ly / (ny_g(grid) - 1),
        params.lz / (nz_g(grid) - 1),
    )


def stable_dt(params, Ci, grid):
    dx, dy, dz = spacing(params, grid)
    ci_max = grid.comm.allreduce(float(np.max(Ci)), "max")
    dt = min(dx**2, dy**2, dz**2) / params.lam / ci_max / 6.1
    if not dt > 0 or not np.isfinite(dt):
        raise ParameterError(f"time step must be positive, got {dt}")
    return dt


def initial_temperature(params, grid):
    shape = grid.n
    if params.init == "constant":
        return np.full(shape, T0)
    if params.init != "gaussian":
        raise ParameterError(f"unknown initial condition {params.init!r}")
    dx, dy, dz = spacing(params, grid)
    x = global_coords(grid, 0, dx)[:, None, None]
    y = global_coords(grid, 1, dy)[None, :, None]
    z = global_coords(grid, 2, dz)[None, None, :]
    w = params.lx / 8
    r2 = (x - params.lx / 2) ** 2 + (y - params.ly / 2) ** 2 + (z - params.lz / 2) ** 2
    return T0 + np.exp(-r2 / w**2)


def run_rank(
    comm,
    params,
    dims=None,
    periodic=False,
    overlap=2,
    hide_comm=None,
    root=0,
    monitor=None,
    monitor_every=10,
):
    """Run the solver on one rank; collective over ``comm``.

    ``hide_comm`` selects the overlapped schedule with the given boundary
    widths (capped to the local interior). ``monitor(it, T_global)`` is called
    on the root every ``monitor_every`` iterations with the gathered field.
    """
    grid = init_global_grid(
        params.nx, params.ny, params.nz, comm=comm, dims=dims, periodic=periodic, overlap=overlap
    )
    try:
        dx, dy, dz = spacing(params, grid)
        T = initial_temperature(params, grid)
        T2 = T.copy()
        Ci = np.ones(grid.n) / params.c0
        dt = stable_dt(params, Ci, grid)
        result = HeatResult(dt=dt, global_n=grid.global_n, dims=grid.dims)

        if hide_comm is not None:
            widths = cap_widths(hide_comm, T.shape)

        for it in range(1, params.nt + 1):
            t0 = time.perf_counter()
            step_secs = 0.0

            def compute(region, T=T, T2=T2):
                nonlocal step_secs
                s0 = time.perf_counter()
                step(T2, T, Ci, params.lam, dt, dx, dy, dz, region)
                step_secs += time.perf_counter() - s0

            if hide_comm is None:
                compute(None)
                update_halo(grid, T2)
            else:
                hide_communication(grid, widths, compute, T2)
            T, T2 = T2, T
            total = time.perf_counter() - t0
            result.timings.append((it, step_secs, total - step_secs, total))
            result.allocations.append(grid.pool.allocations)
            if monitor is not None and it % monitor_every == 0:
                Tg = gather(grid, T, root)
                if Tg is not None:
                    monitor(it, Tg)

        result.T = gather(grid, T, root)
        return result
    finally:
        if not grid.finalized:
            finalize_global_grid(grid)


def run(params, nprocs=1, dims=None, periodic=False, overlap=2, hide_comm=None, **kwargs):
    """Run on ``nprocs`` in-process ranks and return the root's result."""
    results = run_inproc(
        nprocs,
        run_rank,
        params,
        dims=dims,
        periodic=periodic,
        overlap=overlap,
        hide_comm=hide_comm,
        **kwargs,
    )
    return results[0]


def write_field(path, T):
    """Write a global field: text header, then float64 LE values, x fastest."""
    nx, ny, nz = T.shape
    with open(path, "wb") as f:
        f.write(f"{FIELD_MAGIC} {nx} {ny} {nz}\n".encode("ascii"))
        f.write(np.asarray(T, dtype="<f8").tobytes(order="F"))


def read_field(path):
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != FIELD_MAGIC:
            raise ValueError(f"{path}: not an {FIELD_MAGIC} field file")
        shape = tuple(int(v) for v in header[1:])
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {np.prod(shape)} values, found {data.size}")
    return data.reshape(shape, order="F").astype(np.float64)


def write_timings(path, timings):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["it", "step_secs", "halo_secs", "total_secs"])
        for it, step_secs, halo_secs, total in timings:
            writer.writerow([it, f"{step_secs:.9f}", f"{halo_secs:.9f}", f"{total:.9f}"])
