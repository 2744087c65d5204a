"""Cartesian process topology.

Ranks are linearized row-major with the last axis varying fastest::

    rank = (cx * py + cy) * pz + cz

Grids with fewer than three dimensions are expressed through size-1 axes.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConstraintError

NDIMS = 3


def _divisors(n):
    small = [d for d in range(1, int(n**0.5) + 1) if n % d == 0]
    return sorted(set(small + [n // d for d in small]))


def _factorizations(n, fixed):
    """Yield every ordered factorization of ``n`` honoring ``fixed``."""
    if len(fixed) == 1:
        if fixed[0] is None or fixed[0] == n:
            yield (n,)
        return
    head = fixed[0]
    choices = [head] if head is not None else _divisors(n)
    for d in choices:
        if n % d:
            continue
        for rest in _factorizations(n // d, fixed[1:]):
            yield (d,) + rest


def dims_create(nprocs, ndims=NDIMS, fixed=None):
    """Factorize ``nprocs`` into an ``ndims``-axis process grid.

    Among all ordered factorizations consistent with ``fixed`` (entries of
    ``None`` or 0 are free), returns the one with the smallest spread
    ``max(dims) - min(dims)``; ties go to the lexicographically largest
    vector, so earlier axes receive the larger factors.

    >>> dims_create(12)
    (3, 2, 2)
    >>> dims_create(12, fixed=(None, None, 1))
    (4, 3, 1)
    """
    if int(nprocs) != nprocs or nprocs < 1:
        raise ConstraintError(f"nprocs must be a positive integer, got {nprocs!r}")
    if ndims < 1:
        raise ConstraintError(f"ndims must be positive, got {ndims}")
    nprocs = int(nprocs)
    if fixed is None:
        fixed = (None,) * ndims
    fixed = tuple(None if not f else int(f) for f in fixed)
    if len(fixed) != ndims:
        raise ConstraintError(f"fixed has {len(fixed)} entries, expected {ndims}")
    if any(f is not None and f < 0 for f in fixed):
        raise ConstraintError(f"fixed entries must be positive: {fixed}")

    best = None
    for dims in _factorizations(nprocs, fixed):
        key = (max(dims) - min(dims), tuple(-d for d in dims))
        if best is None or key < best[0]:
            best = (key, dims)
    if best is None:
        raise ConstraintError(f"no factorization of {nprocs} honors fixed axes {fixed}")
    return best[1]


def rank_of_coords(coords, dims):
    if len(coords) != len(dims):
        raise BoundsError(f"coords {tuple(coords)} do not match dims {tuple(dims)}")
    rank = 0
    for c, p in zip(coords, dims):
        if not 0 <= c < p:
            raise BoundsError(f"coords {tuple(coords)} out of bounds for dims {tuple(dims)}")
        rank = rank * p + int(c)
    return rank


def coords_of_rank(rank, dims):
    nprocs = int(np.prod(dims))
    if not 0 <= rank < nprocs:
        raise BoundsError(f"rank {rank} out of range for {nprocs} processes")
    coords = []
    for p in reversed(dims):
        coords.append(rank % p)
        rank //= p
    return tuple(reversed(coords))


@dataclass(frozen=True)
class ProcessTopology:
    """Immutable Cartesian layout of ``nprocs`` ranks, seen from ``rank``."""

    dims: tuple
    periodic: tuple = (False, False, False)
    rank: int = 0
    ndims: int = NDIMS
    coords: tuple = field(init=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        periodic = tuple(bool(p) for p in self.periodic)
        if len(dims) != NDIMS or len(periodic) != NDIMS:
            raise BoundsError("dims and periodic must have exactly 3 entries")
        if any(d < 1 for d in dims):
            raise ConstraintError(f"dims must be positive: {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "periodic", periodic)
        object.__setattr__(self, "coords", coords_of_rank(self.rank, dims))

    @property
    def nprocs(self):
        return int(np.prod(self.dims))

    def rank_of(self, coords):
        return rank_of_coords(coords, self.dims)

    def coords_of(self, rank):
        return coords_of_rank(rank, self.dims)

    def neighbor(self, axis, side, rank=None):
        """Rank adjacent to ``rank`` on ``axis``; ``side`` is -1 (lower) or +1 (upper).

        Returns None at a non-periodic boundary.
        """
        coords = list(self.coords if rank is None else self.coords_of(rank))
        c = coords[axis] + side
        p = self.dims[axis]
        if not 0 <= c < p:
            if not self.periodic[axis]:
                return None
            c %= p
        coords[axis] = c
        return self.rank_of(coords)

    def neighbors(self, rank=None):
        """Per-axis ``(lower, upper)`` neighbor pairs."""
        return tuple(
            (self.neighbor(d, -1, rank), self.neighbor(d, +1, rank)) for d in range(NDIMS)
        )

    def with_rank(self, rank):
        return ProcessTopology(self.dims, self.periodic, rank, self.ndims)


def neighbors(topology):
    return topology.neighbors()
