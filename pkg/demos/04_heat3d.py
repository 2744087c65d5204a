"""
3-D heat diffusion
==================

The bundled solver runs explicit heat diffusion on any number of ranks.
Changing the number of ranks (with the global size held fixed) does not
change the answer.
"""
import numpy as np

from igrid.heat3d import HeatParams, run

reference = run(HeatParams(nx=34, ny=34, nz=34, nt=20, init="gaussian"))
print("1 rank : global", reference.global_n, "dt", reference.dt)

# 2x2x2 ranks of 18^3 points tile the same 34^3 global grid: 2*18 - 2 = 34.
split = run(HeatParams(nx=18, ny=18, nz=18, nt=20, init="gaussian"), nprocs=8)
print("8 ranks: global", split.global_n, "dims", split.dims)
print("max abs difference:", np.abs(split.T - reference.T).max())

# A constant temperature is a fixed point of the update.
const = run(HeatParams(nx=10, ny=10, nz=10, nt=50), nprocs=4)
print("constant field preserved:", bool(np.all(const.T == 1.7)))

# Temperature at the centre of the gaussian bump decays with time.
c = tuple(s // 2 for s in reference.T.shape)
print("peak temperature after 20 steps:", reference.T[c])
