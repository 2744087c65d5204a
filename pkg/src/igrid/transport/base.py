"""Point-to-point messaging contract shared by all backends.

Messages are matched on the exact ``(src, dst, tag)`` triple and delivered
in posting order per triple. Sends are eager: the payload is copied (or
written to the socket) when posted, so a send handle is complete as soon as
``isend`` returns and its buffer may be reused immediately.

Collectives (barrier, allreduce, gather, bcast) are built on top of the
point-to-point layer using tags from a reserved range above any halo tag.
"""
import os
import threading
import time
from collections import defaultdict, deque

import numpy as np

from ..errors import ProtocolError, TransportError, TransportTimeout

DEFAULT_TIMEOUT = 30.0

TAG_BARRIER = 0xFFFFFF00
TAG_REDUCE = 0xFFFFFF01
TAG_BCAST = 0xFFFFFF02
TAG_GATHER = 0xFFFFFF03
RESERVED_TAGS = 0xFFFFFF00

_REDUCE_OPS = {"max": (0, max), "min": (1, min), "sum": (2, lambda a, b: a + b)}


def default_timeout():
    value = os.environ.get("IGRID_TIMEOUT_SECS")
    return float(value) if value else DEFAULT_TIMEOUT


def as_payload(buf):
    return np.ascontiguousarray(buf, dtype="<f8").reshape(-1)


class Mailbox:
    """Receive-side queues of one rank, keyed by ``(src, tag)``."""

    def __init__(self):
        self._cond = threading.Condition()
        self._queues = defaultdict(deque)
        self._lost = {}
        self._abort = None

    def put(self, src, tag, payload, ready_at=0.0):
        with self._cond:
            self._queues[src, tag].append((ready_at, payload))
            self._cond.notify_all()

    def peer_lost(self, src, reason):
        with self._cond:
            self._lost[src] = reason
            self._cond.notify_all()

    def abort(self, reason):
        with self._cond:
            self._abort = reason
            self._cond.notify_all()

    def get(self, src, tag, timeout):
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                queue = self._queues.get((src, tag))
                now = time.monotonic()
                if queue:
                    ready_at, payload = queue[0]
                    if ready_at <= now:
                        queue.popleft()
                        return payload
                    wake = min(ready_at, deadline)
                else:
                    if self._abort is not None:
                        raise TransportError(f"aborted: {self._abort}", peer=src)
                    if src in self._lost:
                        raise TransportError(
                            f"peer rank {src} disconnected: {self._lost[src]}", peer=src
                        )
                    wake = deadline
                if now >= deadline:
                    raise TransportTimeout(
                        f"no message from rank {src} with tag {tag:#x} within {timeout:g} s",
                        peer=src,
                    )
                self._cond.wait(wake - now)


class Request:
    """Handle of a posted transfer; ``wait`` completes it exactly once."""

    def __init__(self, peer, tag, kind):
        self.peer = peer
        self.tag = tag
        self.kind = kind
        self.done = False

    def wait(self):
        self.done = True


class RecvRequest(Request):
    def __init__(self, comm, peer, tag, buf):
        super().__init__(peer, tag, "recv")
        self._comm = comm
        self.buf = buf
        self.result = None

    def wait(self):
        if self.done:
            return
        payload = self._comm._mailbox.get(self.peer, self.tag, self._comm.timeout)
        if self.buf is not None:
            flat = self.buf.reshape(-1)
            if payload.size != flat.size:
                raise ProtocolError(
                    f"message from rank {self.peer} (tag {self.tag:#x}) carries "
                    f"{payload.size} values, receive buffer holds {flat.size}",
                    peer=self.peer,
                )
            flat[...] = payload
            self.result = self.buf
        else:
            self.result = payload
        self.done = True


def waitall(requests):
    for req in requests:
        req.wait()


class Communicator:
    """One rank's endpoint. Subclasses implement ``_deliver``."""

    def __init__(self, rank, size, timeout=None):
        self.rank = rank
        self.size = size
        self.timeout = default_timeout() if timeout is None else float(timeout)
        self._mailbox = Mailbox()
        self.grid = None

    def _deliver(self, peer, tag, payload):
        raise NotImplementedError

    def _check_peer(self, peer):
        if not 0 <= peer < self.size:
            raise TransportError(f"invalid peer rank {peer} (size {self.size})", peer=peer)

    def isend(self, peer, tag, buf):
        self._check_peer(peer)
        self._deliver(peer, tag, as_payload(buf))
        req = Request(peer, tag, "send")
        req.done = True
        return req

    def irecv(self, peer, tag, buf=None):
        self._check_peer(peer)
        return RecvRequest(self, peer, tag, buf)

    def send(self, peer, tag, buf):
        self.isend(peer, tag, buf).wait()

    def recv(self, peer, tag, buf=None):
        req = self.irecv(peer, tag, buf)
        req.wait()
        return req.result

    wait = staticmethod(waitall)

    def barrier(self):
        if self.size == 1:
            return
        empty = np.empty(0)
        if self.rank == 0:
            for r in range(1, self.size):
                self.recv(r, TAG_BARRIER, empty)
            for r in range(1, self.size):
                self.send(r, TAG_BARRIER, empty)
        else:
            self.send(0, TAG_BARRIER, empty)
            self.recv(0, TAG_BARRIER, empty)

    def allreduce(self, value, op="max"):
        """Reduce a scalar over all ranks in rank order; every rank gets the result."""
        if op not in _REDUCE_OPS:
            raise ValueError(f"unknown reduction {op!r}")
        code, fn = _REDUCE_OPS[op]
        if self.size == 1:
            return float(value)
        if self.rank == 0:
            acc, mismatch = float(value), None
            for r in range(1, self.size):
                v, c = self.recv(r, TAG_REDUCE, np.empty(2))
                if int(c) != code:
                    mismatch = r
                acc = fn(acc, float(v))
            status = 0.0 if mismatch is None else 1.0
            for r in range(1, self.size):
                self.send(r, TAG_REDUCE, np.array([acc, status]))
            if mismatch is not None:
                raise ProtocolError(f"allreduce op mismatch: rank {mismatch}", peer=mismatch)
            return acc
        self.send(0, TAG_REDUCE, np.array([float(value), code]))
        acc, status = self.recv(0, TAG_REDUCE, np.empty(2))
        if status:
            raise ProtocolError("allreduce op mismatch across ranks", peer=0)
        return float(acc)

    def bcast(self, values, root=0):
        """Broadcast a float array of known size from ``root``."""
        values = as_payload(values).copy()
        if self.size == 1:
            return values
        if self.rank == root:
            for r in range(self.size):
                if r != root:
                    self.send(r, TAG_BCAST, values)
            return values
        return self.recv(root, TAG_BCAST, values)

    def gather(self, values, root=0):
        """Collect one float array per rank on ``root`` (None elsewhere)."""
        values = as_payload(values)
        if self.rank != root:
            self.send(root, TAG_GATHER, values)
            return None
        out = []
        for r in range(self.size):
            out.append(values.copy() if r == root else self.recv(r, TAG_GATHER))
        return out

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
