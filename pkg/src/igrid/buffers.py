"""Reusable send/receive buffers for halo updates."""
import numpy as np

from .errors import PoolError


class BufferPool:
    """Send/receive buffer pairs keyed by field shape, axis, side and slot.

    ``slot`` distinguishes same-shaped fields exchanged in one call, whose
    transfers are in flight together. ``allocations`` counts every buffer
    ever created; it stops growing once each key has been seen.
    """

    def __init__(self):
        self._buffers = {}
        self.allocations = 0
        self.closed = False

    def get(self, shape, axis, side, slot, size):
        if self.closed:
            raise PoolError("buffer pool has been released")
        key = (tuple(shape), axis, side, slot)
        pair = self._buffers.get(key)
        if pair is None:
            pair = (np.empty(size), np.empty(size))
            self._buffers[key] = pair
            self.allocations += 2
        elif pair[0].size != size:
            raise PoolError(f"buffer for {key} holds {pair[0].size} values, need {size}")
        return pair

    def __len__(self):
        return len(self._buffers)

    def release(self):
        self._buffers.clear()
        self.closed = True
