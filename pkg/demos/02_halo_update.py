"""
Halo updates on staggered fields
================================

A field may have one more or one fewer point than the base grid along an
axis (a staggered field). ``update_halo`` works out the halo width from
the actual array shape, so cell-centred and face-centred arrays go
through the same call.
"""
import numpy as np

import igrid
from igrid.transport import run_inproc

n = (8, 6, 6)


def exchange(comm):
    grid = igrid.init_global_grid(*n, comm=comm)
    try:
        # Fill each array with its global x index; halos start out poisoned.
        fields = []
        for shape in [n, (n[0] + 1, n[1], n[2]), (n[0] - 1, n[1], n[2])]:
            gx = np.array([igrid.local_to_global(grid, 0, i, size=shape[0]) for i in range(1, shape[0] + 1)])
            a = np.broadcast_to(gx[:, None, None], shape).astype(float).copy()
            h = igrid.halo_spec(grid, shape)[0].h
            if grid.coords[0] > 0:
                a[:h] = -1
            if grid.coords[0] < grid.dims[0] - 1:
                a[shape[0] - h:] = -1
            fields.append(a)
        before = [a[:, 0, 0].copy() for a in fields]
        igrid.update_halo(grid, *fields)
        return before, [a[:, 0, 0] for a in fields]
    finally:
        igrid.finalize_global_grid(grid)


for rank, (before, after) in enumerate(run_inproc(2, exchange)):
    for label, b, a in zip(["base", "x+1", "x-1"], before, after):
        print(f"rank {rank} {label:4s} before {b.astype(int).tolist()}")
        print(f"rank {rank} {label:4s} after  {a.astype(int).tolist()}")

# The halo width of each field follows from its size: ol = s - (n - o), h = ol // 2.
grid = igrid.init_global_grid(*n)
for shape in [n, (9, 6, 6), (7, 6, 6)]:
    ax = igrid.halo_spec(grid, shape)[0]
    print("size", ax.size, "overlap", ax.ol, "halo", ax.h)
igrid.finalize_global_grid(grid)
