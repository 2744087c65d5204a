"""Halo updates on the implicit global grid.

A field of local size ``s`` on an axis overlaps its neighbor by
``ol = s - (n - o)`` layers and exchanges ``h = ol // 2`` of them per side.
With an odd overlap the middle layer is computed by both neighbors and is
never sent.

Axes are processed in order x, y, z. Each message carries a full slab
(spanning the other two axes, halos included), so edge and corner halos are
correct after the z pass without diagonal messages.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, StaggeringError, TransportError
from .topology import NDIMS

LOWER, UPPER = 0, 1


def message_tag(field_index, axis, direction):
    """Tag of a halo message; ``direction`` 0 travels toward the lower neighbor."""
    return (field_index * 3 + axis) * 2 + direction


@dataclass(frozen=True)
class AxisHalo:
    """Exchange layers of one axis as 1-based inclusive ``(first, last)`` ranges."""

    size: int
    ol: int
    h: int
    send_lower: tuple
    recv_lower: tuple
    send_upper: tuple
    recv_upper: tuple

    @property
    def exchanges(self):
        return self.h > 0

    def layers(self, which):
        first, last = getattr(self, which)
        return range(first, last + 1)


@dataclass(frozen=True)
class HaloSpec:
    shape: tuple
    axes: tuple

    def __getitem__(self, axis):
        return self.axes[axis]


def axis_halo(n, o, s, axis=0):
    stride = n - o
    ol = s - stride
    if ol < 0 or s > n + o:
        raise StaggeringError(
            f"field size {s} on axis {'xyz'[axis]} outside {stride}..{n + o} "
            f"(local size {n}, overlap {o})"
        )
    h = ol // 2
    if h and stride < ol - h:
        # the neighbor would be sent layers it does not own itself
        raise StaggeringError(
            f"field size {s} on axis {'xyz'[axis]}: halo width {h} needs a subdomain "
            f"stride of at least {ol - h}, got {stride}"
        )
    return AxisHalo(
        size=s,
        ol=ol,
        h=h,
        send_lower=(ol - h + 1, ol),
        recv_lower=(1, h),
        send_upper=(s - ol + 1, s - ol + h),
        recv_upper=(s - h + 1, s),
    )


def halo_spec(grid, field_sizes):
    field_sizes = tuple(int(s) for s in field_sizes)
    if len(field_sizes) != NDIMS:
        raise ShapeError(f"expected {NDIMS} field sizes, got {field_sizes}")
    axes = tuple(
        axis_halo(grid.n[d], grid.overlap[d], field_sizes[d], d) for d in range(NDIMS)
    )
    return HaloSpec(field_sizes, axes)


def _slab(axis, first, last):
    index = [slice(None)] * NDIMS
    index[axis] = slice(first - 1, last)
    return tuple(index)


def slab_size(shape, axis, h):
    return h * int(np.prod(shape)) // shape[axis]


def pack(field, spec, axis, side, out=None):
    """Copy the send layers of ``side`` into a flat buffer, x varying fastest."""
    ax = spec.axes[axis]
    first, last = ax.send_lower if side == LOWER else ax.send_upper
    slab = field[_slab(axis, first, last)]
    if out is None:
        out = np.empty(slab.size)
    if out.size != slab.size:
        raise ShapeError(f"send buffer holds {out.size} values, slab has {slab.size}")
    out.reshape(slab.shape, order="F")[...] = slab
    return out


def unpack(buffer, field, spec, axis, side):
    """Write a packed buffer into the receive layers of ``side``."""
    ax = spec.axes[axis]
    first, last = ax.recv_lower if side == LOWER else ax.recv_upper
    index = _slab(axis, first, last)
    shape = field[index].shape
    if buffer.size != int(np.prod(shape)):
        raise ShapeError(f"buffer holds {buffer.size} values, receive slab is {shape}")
    field[index] = buffer.reshape(shape, order="F")


def update_halo(grid, *fields):
    """Refresh the halo layers of ``fields`` from the neighboring ranks.

    Collective: every rank passes the same number of fields in the same
    order. All fields travel together, one axis at a time.
    """
    grid.check_active()
    if not fields:
        return
    specs = []
    for f in fields:
        if not isinstance(f, np.ndarray) or f.ndim != NDIMS:
            raise ShapeError("halo fields must be 3-D numpy arrays")
        specs.append(halo_spec(grid, f.shape))
    slots, seen = [], {}
    for f in fields:
        slots.append(seen.get(f.shape, 0))
        seen[f.shape] = slots[-1] + 1

    topo, comm, pool = grid.topology, grid.comm, grid.pool
    for axis in range(NDIMS):
        lower = topo.neighbor(axis, -1)
        upper = topo.neighbor(axis, +1)
        if lower is None and upper is None:
            continue
        self_wrap = lower == topo.rank
        requests, pending = [], []
        for i, (f, spec) in enumerate(zip(fields, specs)):
            if not spec.axes[axis].exchanges:
                continue
            h = spec.axes[axis].h
            size = slab_size(f.shape, axis, h)
            send_lo, recv_lo = pool.get(f.shape, axis, LOWER, slots[i], size)
            send_hi, recv_hi = pool.get(f.shape, axis, UPPER, slots[i], size)
            if self_wrap:
                pack(f, spec, axis, UPPER, send_hi)
                pack(f, spec, axis, LOWER, send_lo)
                pending.append((send_hi, f, spec, LOWER))
                pending.append((send_lo, f, spec, UPPER))
                continue
            if lower is not None:
                requests.append(comm.irecv(lower, message_tag(i, axis, UPPER), recv_lo))
                requests.append(
                    comm.isend(lower, message_tag(i, axis, LOWER), pack(f, spec, axis, LOWER, send_lo))
                )
                pending.append((recv_lo, f, spec, LOWER))
            if upper is not None:
                requests.append(comm.irecv(upper, message_tag(i, axis, LOWER), recv_hi))
                requests.append(
                    comm.isend(upper, message_tag(i, axis, UPPER), pack(f, spec, axis, UPPER, send_hi))
                )
                pending.append((recv_hi, f, spec, UPPER))
        try:
            comm.wait(requests)
        except TransportError as exc:
            raise type(exc)(
                f"halo update on axis {'xyz'[axis]} (rank {topo.rank}): {exc}", peer=exc.peer
            ) from exc
        for buf, f, spec, side in pending:
            unpack(buf, f, spec, axis, side)
