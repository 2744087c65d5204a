"""In-process backend: every rank is a thread of the current process."""
import threading
import time

from .base import Communicator


class InprocWorld:
    """Shared state of ``nprocs`` in-process ranks.

    ``delay`` holds every message back for that many seconds after it is
    posted, which emulates a slow interconnect.
    """

    def __init__(self, nprocs, timeout=None, delay=0.0):
        self.nprocs = nprocs
        self.delay = delay
        self.comms = [InprocComm(self, r, timeout) for r in range(nprocs)]

    def abort(self, reason):
        for comm in self.comms:
            comm._mailbox.abort(reason)


class InprocComm(Communicator):
    def __init__(self, world, rank, timeout=None):
        super().__init__(rank, world.nprocs, timeout)
        self.world = world

    def _deliver(self, peer, tag, payload):
        ready_at = time.monotonic() + self.world.delay if self.world.delay else 0.0
        self.world.comms[peer]._mailbox.put(self.rank, tag, payload.copy(), ready_at)


def self_comm(timeout=None):
    return InprocWorld(1, timeout).comms[0]


def run_inproc(nprocs, fn, *args, timeout=None, delay=0.0, **kwargs):
    """Run ``fn(comm, *args, **kwargs)`` on ``nprocs`` thread ranks.

    Returns the per-rank results in rank order. If any rank raises, the
    others are woken with a transport error and the first failure (by rank)
    is re-raised once every thread has stopped.
    """
    world = InprocWorld(nprocs, timeout, delay)
    results = [None] * nprocs
    errors = [None] * nprocs

    def target(rank):
        try:
            results[rank] = fn(world.comms[rank], *args, **kwargs)
        except BaseException as exc:
            errors[rank] = exc
            world.abort(f"rank {rank} failed: {exc!r}")

    if nprocs == 1:
        target(0)
    else:
        threads = [
            threading.Thread(target=target, args=(r,), name=f"igrid-rank-{r}", daemon=True)
            for r in range(nprocs)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    failed = [e for e in errors if e is not None]
    if failed:
        # prefer the root cause over the abort notifications it triggered
        primary = next((e for e in failed if "aborted:" not in str(e)), failed[0])
        raise primary
    return results
