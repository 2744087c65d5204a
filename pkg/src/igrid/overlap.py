"""Hiding halo communication behind computation.

The computed region is split into a boundary part (six slabs of widths
``b`` along each face) and an inner box. Boundary slabs are computed first,
then the halo update runs on a worker thread while the inner box is
computed. The result is identical to computing everything and then
updating the halos.
"""
from concurrent.futures import ThreadPoolExecutor

from .errors import WidthError
from .halo import halo_spec, update_halo
from .topology import NDIMS


def _region_shape(region):
    return [r.stop if isinstance(r, slice) else r[1] for r in region]


def _region_bounds(region, shape):
    if region is None:
        return tuple((0, s) for s in shape)
    bounds = []
    for r, s in zip(region, shape):
        if isinstance(r, slice):
            start, stop, _ = r.indices(s)
        else:
            start, stop = r
        bounds.append((start, stop))
    return tuple(bounds)


def cap_widths(widths, region_shape):
    """Clamp widths so that two boundary slabs never exceed the region."""
    return tuple(min(int(b), e // 2) for b, e in zip(widths, region_shape))


def inner_box(bounds, widths):
    return tuple(slice(lo + b, hi - b) for (lo, hi), b in zip(bounds, widths))


def boundary_slabs(bounds, widths):
    """Disjoint slabs covering ``region`` minus its inner box.

    Order is x-low, x-high, y-low, y-high, z-low, z-high; each slab spans
    the full region on axes not yet cut and the inner range on axes already
    handled, so no cell appears twice. Empty slabs are dropped.
    """
    slabs = []
    span = [slice(lo, hi) for lo, hi in bounds]
    for d in range(NDIMS):
        lo, hi = bounds[d]
        b = widths[d]
        for part in (slice(lo, min(lo + b, hi)), slice(max(hi - b, lo + b), hi)):
            slab = list(span)
            slab[d] = part
            if all(s.stop > s.start for s in slab):
                slabs.append(tuple(slab))
        span[d] = slice(lo + b, max(hi - b, lo + b))
    return slabs


def _check_widths(grid, fields, bounds, widths):
    for d in range(NDIMS):
        extent = bounds[d][1] - bounds[d][0]
        if widths[d] < 0 or 2 * widths[d] > extent:
            raise WidthError(
                f"boundary width {widths[d]} on axis {'xyz'[d]} does not fit a region of {extent}"
            )
    for f in fields:
        spec = halo_spec(grid, f.shape)
        for d in range(NDIMS):
            ax = spec.axes[d]
            if ax.exchanges and widths[d] < ax.ol:
                raise WidthError(
                    f"boundary width {widths[d]} on axis {'xyz'[d]} is below the field "
                    f"overlap {ax.ol}; send layers would not be computed in time"
                )


def _executor(grid):
    if grid._executor is None:
        grid._executor = ThreadPoolExecutor(1, thread_name_prefix=f"igrid-comm-{grid.me}")
    return grid._executor


def hide_communication(grid, widths, compute, *fields, region=None):
    """Run ``compute`` over ``region`` and update the halos of ``fields``.

    ``compute(box)`` receives a tuple of three slices and must write only
    inside it. ``region`` defaults to the whole first field.
    """
    grid.check_active()
    widths = tuple(int(b) for b in widths)
    shape = fields[0].shape if fields else None
    if region is None and shape is None:
        raise WidthError("a region is required when no fields are exchanged")
    bounds = _region_bounds(region, shape or _region_shape(region))
    _check_widths(grid, fields, bounds, widths)

    for slab in boundary_slabs(bounds, widths):
        compute(slab)
    inner = inner_box(bounds, widths)
    comm = _executor(grid).submit(update_halo, grid, *fields)
    try:
        if all(s.stop > s.start for s in inner):
            compute(inner)
    finally:
        # always join the exchange so no transfer outlives this call
        comm_error = comm.exception()
    if comm_error is not None:
        raise comm_error


def sequential(grid, compute, *fields, region=None):
    """Reference schedule: compute the whole region, then update halos."""
    shape = fields[0].shape if fields else _region_shape(region)
    bounds = _region_bounds(region, shape)
    compute(tuple(slice(lo, hi) for lo, hi in bounds))
    update_halo(grid, *fields)
