"""
The implicit global grid
========================

Every rank allocates an ordinary local array. The global grid is never
stored anywhere; it is implied by the local size, the overlap between
neighbours and the process grid.
"""
import numpy as np

import igrid
from igrid.transport import run_inproc

# A single rank: the global grid is just the local grid.
grid = igrid.init_global_grid(8, 8, 8)
print("1 rank :", grid.dims, grid.global_n)
igrid.finalize_global_grid(grid)

# Two ranks along x. Neighbouring blocks share two layers, so the global
# size is 2*8 - 2 = 14 in x.
def describe(comm):
    grid = igrid.init_global_grid(8, 8, 8, comm=comm)
    try:
        first = igrid.local_to_global(grid, "x", 1)
        last = igrid.local_to_global(grid, "x", 8)
        return grid.me, grid.coords, grid.global_n, (first, last)
    finally:
        igrid.finalize_global_grid(grid)

for me, coords, global_n, span in run_inproc(2, describe):
    print(f"rank {me} at {coords}: global {global_n}, local x 1..8 -> global x {span[0]}..{span[1]}")

# The process grid is chosen as cubic as possible.
for nprocs in (8, 12, 7):
    print(nprocs, "ranks ->", igrid.dims_create(nprocs, 3))

# Periodic axes drop the duplicated seam: (8 - 2) * 2 = 12.
def periodic_size(comm):
    grid = igrid.init_global_grid(8, 8, 8, comm=comm, periodic=(True, False, False))
    try:
        return grid.global_n
    finally:
        igrid.finalize_global_grid(grid)

print("periodic x on 2 ranks:", run_inproc(2, periodic_size)[0])

# Gathering assembles the owned part of every local array on rank 0.
def gather_ids(comm):
    grid = igrid.init_global_grid(4, 1, 1, comm=comm)
    try:
        return igrid.gather(grid, np.full(grid.n, float(grid.me)))
    finally:
        igrid.finalize_global_grid(grid)

print("gathered rank ids:", run_inproc(2, gather_ids)[0].ravel())
