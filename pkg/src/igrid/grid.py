"""Implicit global grid.

The global domain is never stored. It follows from each rank's local size
``n``, the overlap ``o`` between neighboring subdomains and the process
topology: on every axis rank ``c`` covers the global layers
``c*(n-o) + 1 .. c*(n-o) + n``, so adjacent ranks share ``o`` layers.

All layer indices in this module are 1-based.
"""
import threading

import numpy as np

from .buffers import BufferPool
from .errors import BoundsError, ConfigError, GridSizeError, GridStateError, ShapeError
from .topology import NDIMS, ProcessTopology, dims_create
from .transport.inproc import self_comm

AXES = {"x": 0, "y": 1, "z": 2}

_local = threading.local()


def axis_index(axis):
    if isinstance(axis, str):
        try:
            return AXES[axis]
        except KeyError:
            raise BoundsError(f"unknown axis {axis!r}") from None
    if not 0 <= axis < NDIMS:
        raise BoundsError(f"axis {axis} out of range")
    return axis


def _per_axis(value, name, cast):
    if np.ndim(value) == 0:
        return (cast(value),) * NDIMS
    value = tuple(cast(v) for v in value)
    if len(value) != NDIMS:
        raise ConfigError(f"{name} needs {NDIMS} entries, got {len(value)}")
    return value


def global_extent(n, o, p, periodic):
    """Number of distinct global layers covered by ``p`` ranks on one axis."""
    if periodic:
        return (n - o) * p
    return n * p - (p - 1) * o


def global_sizes(n, overlap, dims, periodic):
    return tuple(global_extent(*args) for args in zip(n, overlap, dims, periodic))


class GlobalGrid:
    """One rank's view of the implicit global grid.

    Created by :func:`init_global_grid`; holds the topology, the
    communicator and the halo buffer pool of this rank.
    """

    def __init__(self, n, overlap, topology, comm):
        self.n = tuple(n)
        self.overlap = tuple(overlap)
        self.topology = topology
        self.comm = comm
        self.global_n = global_sizes(self.n, self.overlap, topology.dims, topology.periodic)
        self.pool = BufferPool()
        self.finalized = False
        self._executor = None

    @property
    def me(self):
        return self.topology.rank

    @property
    def nprocs(self):
        return self.topology.nprocs

    @property
    def dims(self):
        return self.topology.dims

    @property
    def coords(self):
        return self.topology.coords

    @property
    def periodic(self):
        return self.topology.periodic

    def check_active(self):
        if self.finalized:
            raise GridStateError("global grid has been finalized")

    def stride(self, axis):
        return self.n[axis] - self.overlap[axis]

    def field_extent(self, axis, size):
        """Global number of distinct layers of a field of local ``size`` on ``axis``."""
        p = self.dims[axis]
        if self.periodic[axis]:
            return self.stride(axis) * p
        return size + (p - 1) * self.stride(axis)

    def field_global_shape(self, shape):
        return tuple(self.field_extent(d, s) for d, s in enumerate(shape))

    def __repr__(self):
        return (
            f"GlobalGrid(me={self.me}, n={self.n}, overlap={self.overlap}, "
            f"dims={self.dims}, periodic={self.periodic}, global_n={self.global_n})"
        )


def init_global_grid(nx, ny=1, nz=1, *, comm=None, dims=None, periodic=False, overlap=2):
    """Create this rank's view of the global grid.

    ``comm`` is the rank's communicator (a single-rank one is created when
    omitted). Axes with a local size of 1 are inactive: they get one process,
    no overlap and no halo exchange. ``dims`` entries of 0 or None are
    chosen automatically by :func:`~igrid.topology.dims_create`.
    """
    n = tuple(int(v) for v in (nx, ny, nz))
    if any(v < 1 for v in n):
        raise GridSizeError(f"local sizes must be positive: {n}")
    active = tuple(v > 1 for v in n)

    overlap = _per_axis(overlap, "overlap", int)
    overlap = tuple(o if a else 0 for o, a in zip(overlap, active))
    for d, (nd, od, a) in enumerate(zip(n, overlap, active)):
        if not a:
            continue
        if od < 2 or od % 2:
            raise ConfigError(f"overlap on axis {'xyz'[d]} must be even and >= 2, got {od}")
        if nd <= od:
            raise GridSizeError(
                f"local size {nd} on axis {'xyz'[d]} must exceed the overlap {od}"
            )
    periodic = tuple(p and a for p, a in zip(_per_axis(periodic, "periodic", bool), active))

    if comm is None:
        comm = getattr(_local, "self_comm", None)
        if comm is None:
            comm = _local.self_comm = self_comm()
    if comm.grid is not None:
        raise GridStateError(f"rank {comm.rank} already has an active global grid")

    fixed = [None] * NDIMS if dims is None else [d or None for d in dims]
    if len(fixed) != NDIMS:
        raise ConfigError(f"dims needs {NDIMS} entries")
    for d, a in enumerate(active):
        if not a:
            if fixed[d] not in (None, 1):
                raise ConfigError(f"axis {'xyz'[d]} has local size 1 and cannot be split")
            fixed[d] = 1
    ndims = max(d for d in range(NDIMS) if active[d] or d == 0) + 1
    topo_dims = dims_create(comm.size, NDIMS, fixed)

    topology = ProcessTopology(topo_dims, periodic, comm.rank, ndims)
    grid = GlobalGrid(n, overlap, topology, comm)
    comm.grid = grid
    _local.grid = grid
    return grid


def current_grid():
    grid = getattr(_local, "grid", None)
    if grid is None:
        raise GridStateError("no global grid initialized in this context")
    grid.check_active()
    return grid


def global_size(grid, axis):
    grid.check_active()
    return grid.global_n[axis_index(axis)]


def nx_g(grid=None):
    return global_size(grid or current_grid(), 0)


def ny_g(grid=None):
    return global_size(grid or current_grid(), 1)


def nz_g(grid=None):
    return global_size(grid or current_grid(), 2)


def local_to_global(grid, axis, local_index, size=None, coord=None):
    """Global layer index of a local layer.

    ``size`` is the field size on the axis (defaults to the grid's local
    size) and ``coord`` the process coordinate (defaults to this rank's).
    On periodic axes the result is wrapped into ``1 .. global extent``.
    """
    grid.check_active()
    d = axis_index(axis)
    size = grid.n[d] if size is None else size
    if not 1 <= local_index <= size:
        raise BoundsError(f"local index {local_index} outside 1..{size} on axis {'xyz'[d]}")
    c = grid.coords[d] if coord is None else coord
    g = local_index + c * grid.stride(d)
    if grid.periodic[d]:
        g = (g - 1) % grid.field_extent(d, size) + 1
    return g


def global_coord(grid, axis, local_index, spacing, size=None):
    """Physical coordinate ``(global_index - 1) * spacing`` of a local layer."""
    return (local_to_global(grid, axis, local_index, size) - 1) * spacing


def global_coords(grid, axis, spacing, size=None):
    """Vector of physical coordinates of every local layer on ``axis``."""
    d = axis_index(axis)
    size = grid.n[d] if size is None else size
    return np.array([global_coord(grid, d, i, spacing, size) for i in range(1, size + 1)])


def owned_range(grid, axis, size, coord=None):
    """Local layers ``(first, last)`` owned by the rank at ``coord`` on ``axis``.

    A rank owns everything but the halo layers it receives; where two ranks
    compute the same middle layer (odd field overlap) the lower one owns it.
    Over all ranks the owned layers partition the global layers exactly.
    """
    d = axis_index(axis)
    c = grid.coords[d] if coord is None else coord
    ol = size - grid.stride(d)
    h = ol // 2
    p = grid.dims[d]
    has_lower = grid.periodic[d] or c > 0
    has_upper = grid.periodic[d] or c < p - 1
    first = ol - h + 1 if has_lower else 1
    last = size - h if has_upper else size
    return first, last


def _owned_block_indices(grid, shape, coords):
    """Per-axis (local slice, 0-based global indices) of one rank's owned block."""
    out = []
    for d, s in enumerate(shape):
        first, last = owned_range(grid, d, s, coords[d])
        local = np.arange(first, last + 1)
        g = local + coords[d] * grid.stride(d)
        if grid.periodic[d]:
            g = (g - 1) % grid.field_extent(d, s) + 1
        out.append((slice(first - 1, last), g - 1))
    return out


def gather(grid, field, root=0):
    """Assemble the global field on ``root`` from every rank's owned layers.

    Collective. Returns the global array on ``root`` and None elsewhere.
    """
    grid.check_active()
    field = np.asarray(field)
    if field.ndim != NDIMS:
        raise ShapeError(f"gather expects a 3-D field, got shape {field.shape}")
    topo = grid.topology
    mine = _owned_block_indices(grid, field.shape, topo.coords)
    block = field[tuple(sl for sl, _ in mine)]
    if topo.nprocs == 1:
        out = np.empty(grid.field_global_shape(field.shape), dtype=field.dtype)
        out[np.ix_(*(g for _, g in mine))] = block
        return out
    blocks = grid.comm.gather(block, root)
    if blocks is None:
        return None
    out = np.empty(grid.field_global_shape(field.shape))
    for r, flat in enumerate(blocks):
        idx = _owned_block_indices(grid, field.shape, topo.coords_of(r))
        shape = tuple(len(g) for _, g in idx)
        if flat.size != int(np.prod(shape)):
            raise ShapeError(f"rank {r} sent {flat.size} values, expected block {shape}")
        out[np.ix_(*(g for _, g in idx))] = flat.reshape(shape)
    return out


def allreduce(grid, value, op="max"):
    grid.check_active()
    return grid.comm.allreduce(value, op)


def finalize_global_grid(grid=None):
    """Release the grid's buffers and worker threads; collective.

    The communicator stays open; whoever created it closes it.
    """
    grid = grid or getattr(_local, "grid", None)
    if grid is None or grid.finalized:
        raise GridStateError("no active global grid to finalize")
    if grid.nprocs > 1:
        grid.comm.barrier()
    grid.finalized = True
    grid.pool.release()
    if grid._executor is not None:
        grid._executor.shutdown(wait=True)
        grid._executor = None
    grid.comm.grid = None
    if getattr(_local, "grid", None) is grid:
        _local.grid = None
