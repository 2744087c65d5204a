"""TCP backend.

Every rank owns one listening socket. Rank 0's listener doubles as the
rendezvous coordinator: joiners send a ``JOIN`` line with their (optional)
rank and listen address, and once ``nprocs`` ranks have arrived the
coordinator answers each with its rank and the full address table.

Data connections are opened lazily on the first send to a peer. A new
connection starts with a ``PEER <rank>\\n`` line, after which only frames
(see :mod:`igrid.transport.frame`) travel on it, in both directions.
"""
import errno
import json
import logging
import os
import socket
import threading
import time

from ..errors import ProtocolError, RendezvousError, TransportError, TransportTimeout
from .base import Communicator, default_timeout
from .frame import encode_frame, read_frame

log = logging.getLogger(__name__)

MAX_LINE = 1 << 16


def parse_address(address):
    host, _, port = address.rpartition(":")
    if not host or not port:
        raise RendezvousError(f"coordinator address must be host:port, got {address!r}")
    return host, int(port)


def _read_line(sock):
    out = bytearray()
    while not out.endswith(b"\n"):
        chunk = sock.recv(1)
        if not chunk:
            raise ProtocolError(f"connection closed during handshake after {bytes(out)!r}")
        out += chunk
        if len(out) > MAX_LINE:
            raise ProtocolError("handshake line too long")
    return out[:-1].decode("ascii")


def _send_json(sock, prefix, obj):
    sock.sendall(f"{prefix} {json.dumps(obj)}\n".encode("ascii"))


class _Rendezvous:
    """Coordinator bookkeeping, run on rank 0's accept thread."""

    def __init__(self, nprocs):
        self.nprocs = nprocs
        self.on_complete = None
        self.joiners = []  # (sock or None, requested rank, address)
        self.done = threading.Event()
        self.lock = threading.Lock()
        self.result = None

    def add(self, sock, rank, addr):
        with self.lock:
            if self.done.is_set():
                raise RendezvousError("rendezvous already complete")
            if rank is not None:
                if not 0 <= rank < self.nprocs:
                    raise RendezvousError(f"rank {rank} out of range for {self.nprocs} processes")
                if any(r == rank for _, r, _ in self.joiners):
                    raise RendezvousError(f"duplicate rank {rank}")
            self.joiners.append((sock, rank, addr))
            if len(self.joiners) == self.nprocs:
                self._complete()

    def _complete(self):
        taken = {r for _, r, _ in self.joiners if r is not None}
        free = iter(r for r in range(self.nprocs) if r not in taken)
        assigned = [(s, r if r is not None else next(free), a) for s, r, a in self.joiners]
        table = [None] * self.nprocs
        for _, r, a in assigned:
            table[r] = list(a)
        for s, r, _ in assigned:
            if s is None:
                self.on_complete(r, [tuple(a) for a in table])
            else:
                try:
                    _send_json(s, "OK", {"rank": r, "table": table})
                finally:
                    s.close()
        self.done.set()

    def fail(self, message, kind):
        with self.lock:
            for s, _, _ in self.joiners:
                if s is not None:
                    try:
                        _send_json(s, "ERR", {"error": message, "kind": kind})
                    except OSError:
                        pass
                    s.close()
            self.joiners = []
            self.done.set()


class TcpComm(Communicator):
    """A rank connected to its peers over TCP."""

    def __init__(self, listener, nprocs, timeout=None, rendezvous=None, rank=0, table=None):
        super().__init__(rank, nprocs, timeout)
        self._listener = listener
        self.table = table if table is not None else [None] * nprocs
        self._conns = {}
        self._lock = threading.Lock()
        self._closing = False
        self._rendezvous = rendezvous
        self._threads = []
        if listener is not None:
            self._spawn(self._accept_loop, "accept")

    def _spawn(self, fn, name, *args):
        t = threading.Thread(target=fn, args=args, name=f"igrid-tcp-{name}", daemon=True)
        t.start()
        self._threads.append(t)

    @property
    def address(self):
        return self._listener.getsockname()[:2] if self._listener is not None else None

    def _adopt(self, rank, table):
        self.rank, self.table = rank, table

    # connection management

    def _accept_loop(self):
        while not self._closing:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            self._spawn(self._handshake, "handshake", sock)

    def _handshake(self, sock):
        try:
            sock.settimeout(self.timeout)
            line = _read_line(sock)
            kind, _, body = line.partition(" ")
            if kind == "PEER":
                peer = int(body)
                if not 0 <= peer < self.size:
                    raise ProtocolError(f"bad peer rank {peer}")
                sock.settimeout(None)
                self._register(peer, sock)
            elif kind == "JOIN" and self._rendezvous is not None:
                msg = json.loads(body)
                try:
                    self._rendezvous.add(sock, msg.get("rank"), tuple(msg["addr"]))
                except RendezvousError as exc:
                    _send_json(sock, "ERR", {"error": str(exc), "kind": "rendezvous"})
                    sock.close()
            else:
                raise ProtocolError(f"unexpected handshake {line!r}")
        except (OSError, ValueError, ProtocolError) as exc:
            log.warning("rank %d: rejected incoming connection: %s", self.rank, exc)
            sock.close()

    def _register(self, peer, sock):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        with self._lock:
            # keep the first connection for sending; a simultaneous dial from
            # both ends leaves a second one that is only read from
            self._conns.setdefault(peer, (sock, threading.Lock()))
        self._spawn(self._reader, f"reader-{peer}", peer, sock)

    def _reader(self, peer, sock):
        try:
            while True:
                frame = read_frame(sock)
                if frame is None:
                    raise TransportError("connection closed", peer=peer)
                src, dst, tag, payload = frame
                if src != peer or dst != self.rank:
                    raise ProtocolError(
                        f"frame {src}->{dst} on the connection from rank {peer}", peer=peer
                    )
                self._mailbox.put(src, tag, payload)
        except (OSError, TransportError) as exc:
            if not self._closing:
                self._mailbox.peer_lost(peer, str(exc))

    def _connection(self, peer):
        with self._lock:
            if peer in self._conns:
                return self._conns[peer]
            host, port = self.table[peer]
            try:
                sock = socket.create_connection((host, port), timeout=self.timeout)
                sock.settimeout(None)
                sock.sendall(f"PEER {self.rank}\n".encode("ascii"))
            except OSError as exc:
                raise TransportError(
                    f"cannot connect to rank {peer} at {host}:{port}: {exc}", peer=peer
                ) from exc
        self._register(peer, sock)
        with self._lock:
            return self._conns[peer]

    def _deliver(self, peer, tag, payload):
        if peer == self.rank:
            self._mailbox.put(peer, tag, payload.copy())
            return
        sock, lock = self._connection(peer)
        frame = encode_frame(self.rank, peer, tag, payload)
        try:
            with lock:
                sock.sendall(frame)
        except OSError as exc:
            raise TransportError(f"send to rank {peer} failed: {exc}", peer=peer) from exc

    def close(self):
        if self._closing:
            return
        self._closing = True
        if self._listener is not None:
            try:
                self._listener.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._listener.close()
        with self._lock:
            conns = list(self._conns.values())
            self._conns.clear()
        for sock, _ in conns:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()


def _listen(host, port=0):
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    sock.listen(128)
    return sock


def _host(address, nprocs, rank, timeout):
    host, port = parse_address(address)
    try:
        listener = _listen(host, port)
    except OSError as exc:
        if rank is None and exc.errno == errno.EADDRINUSE:
            return None
        raise RendezvousError(f"cannot bind coordinator {address}: {exc}") from exc
    rv = _Rendezvous(nprocs)
    comm = TcpComm(listener, nprocs, timeout, rendezvous=rv)
    rv.on_complete = comm._adopt
    rv.add(None, rank, listener.getsockname()[:2])
    if not rv.done.wait(comm.timeout):
        missing = nprocs - len(rv.joiners)
        rv.fail(f"{missing} of {nprocs} ranks did not join within {comm.timeout:g} s", "timeout")
        comm.close()
        raise TransportTimeout(f"rendezvous at {address}: {missing} of {nprocs} ranks missing")
    comm._rendezvous = None
    return comm


def _join(address, nprocs, rank, timeout):
    host, port = parse_address(address)
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            break
        except OSError as exc:
            if time.monotonic() > deadline:
                raise TransportTimeout(f"coordinator {address} unreachable: {exc}") from exc
            time.sleep(0.05)
    listener = _listen(sock.getsockname()[0])
    try:
        _send_json(sock, "JOIN", {"rank": rank, "addr": list(listener.getsockname()[:2])})
        # the coordinator answers at its own timeout; allow a little slack
        sock.settimeout(max(deadline - time.monotonic(), 0.0) + 5.0)
        try:
            line = _read_line(sock)
        except socket.timeout as exc:
            raise TransportTimeout(f"no rendezvous reply from {address}") from exc
        except ProtocolError as exc:
            raise RendezvousError(f"coordinator {address} closed the connection") from exc
    except BaseException:
        listener.close()
        raise
    finally:
        sock.close()
    kind, _, body = line.partition(" ")
    msg = json.loads(body)
    if kind != "OK":
        listener.close()
        cls = TransportTimeout if msg.get("kind") == "timeout" else RendezvousError
        raise cls(f"rendezvous failed: {msg.get('error')}")
    return TcpComm(
        listener, nprocs, timeout, rank=msg["rank"], table=[tuple(a) for a in msg["table"]]
    )


def rendezvous_connect(coordinator, nprocs, rank=None, timeout=None):
    """Join (or host) the rendezvous at ``coordinator`` and return a connected rank.

    Rank 0 hosts the coordinator on its own listening socket. A process
    without an explicit rank hosts if it manages to bind the coordinator
    address first, and joins otherwise; ranks left unspecified are handed
    out in arrival order.
    """
    timeout = default_timeout() if timeout is None else float(timeout)
    if nprocs == 1:
        if rank not in (None, 0):
            raise RendezvousError(f"rank {rank} out of range for 1 process")
        comm = TcpComm(None, 1, timeout)
        comm.table = [None]
        return comm
    if rank is not None and not 0 <= rank < nprocs:
        raise RendezvousError(f"rank {rank} out of range for {nprocs} processes")
    if rank in (None, 0):
        comm = _host(coordinator, nprocs, rank, timeout)
        if comm is not None:
            return comm
    return _join(coordinator, nprocs, rank, timeout)


def connect_from_env():
    """Build a TCP rank from the ``IGRID_*`` environment variables."""
    try:
        coordinator = os.environ["IGRID_COORDINATOR"]
        nprocs = int(os.environ["IGRID_NPROCS"])
    except KeyError as exc:
        raise RendezvousError(f"missing environment variable {exc.args[0]}") from None
    rank = os.environ.get("IGRID_RANK")
    return rendezvous_connect(coordinator, nprocs, None if rank in (None, "") else int(rank))


def free_port(host="127.0.0.1"):
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind((host, 0))
        return s.getsockname()[1]
