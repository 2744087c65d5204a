"""
Ranks over TCP
==============

The same code runs unchanged on top of localhost TCP. Each rank meets
the others at a coordinator address; here the ranks are threads of one
process, but separate processes (``igrid run --transport tcp``) work
the same way.
"""
import threading

import numpy as np

import igrid
from igrid.transport import free_port, rendezvous_connect

address = f"127.0.0.1:{free_port()}"
nprocs = 2
results = {}


def rank_main():
    comm = rendezvous_connect(address, nprocs)
    try:
        grid = igrid.init_global_grid(6, 6, 6, comm=comm)
        try:
            a = np.full(grid.n, float(grid.me))
            igrid.update_halo(grid, a)
            results[grid.me] = a[:, 0, 0].tolist()
        finally:
            igrid.finalize_global_grid(grid)
    finally:
        comm.close()


threads = [threading.Thread(target=rank_main) for _ in range(nprocs)]
for t in threads:
    t.start()
for t in threads:
    t.join()

for rank in sorted(results):
    print(f"rank {rank} x-profile after exchange: {results[rank]}")
