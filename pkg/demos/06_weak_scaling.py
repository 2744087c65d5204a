"""
Desk-scale weak scaling
=======================

Each rank keeps the same local problem size while the number of ranks
grows. Efficiency is the single-rank median time divided by the median
time at each rank count. With in-process ranks sharing one interpreter
the efficiency falls off quickly; that is a property of the transport,
not of the decomposition.
"""
import sys

from igrid import bench
from igrid.heat3d import HeatParams
from igrid.transport import run_inproc

params = HeatParams(nx=32, ny=32, nz=32, nt=5)
samples = {p: run_inproc(p, bench.bench_rank, params, samples=10)[0] for p in (1, 2, 4)}
bench.write_csv(sys.stdout, bench.summarize(samples))
