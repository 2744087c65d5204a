import socket
import threading
import time
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igrid.errors import (
    FramingError,
    ProtocolError,
    RendezvousError,
    TransportError,
    TransportTimeout,
)
from igrid.transport import (
    HEADER_SIZE,
    InprocWorld,
    decode_frame,
    encode_frame,
    free_port,
    rendezvous_connect,
    run_inproc,
)
from igrid.transport.frame import read_frame

from conftest import random_halo_case, run_halo_case, run_tcp

BACKENDS = {"inproc": run_inproc, "tcp": run_tcp}


def test_frame_header_bytes():
    frame = encode_frame(0, 1, 4, [1.0])
    assert HEADER_SIZE == 25
    assert frame[:25].hex(" ") == (
        "49 47 47 31 01 00 00 00 00 01 00 00 00 04 00 00 00 08 00 00 00 00 00 00 00"
    )
    assert frame[25:] == np.float64(1.0).tobytes()
    assert len(frame) == 33


def test_frame_round_trip_random_payloads():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        payload = rng.standard_normal(int(rng.integers(0, 50)))
        src, dst, tag = (int(v) for v in rng.integers(0, 2**32, size=3))
        out = decode_frame(encode_frame(src, dst, tag, payload))
        assert out[:3] == (src, dst, tag)
        assert out[3].tobytes() == payload.tobytes()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(allow_nan=False), max_size=20), st.integers(0, 2**32 - 1))
def test_frame_round_trip_property(values, tag):
    _, _, t, payload = decode_frame(encode_frame(3, 2, tag, values))
    assert t == tag and payload.tolist() == values


def test_frame_errors():
    good = encode_frame(0, 1, 4, [1.0, 2.0])
    with pytest.raises(ProtocolError):
        decode_frame(b"XXXX" + good[4:])
    with pytest.raises(ProtocolError):
        decode_frame(good[:4] + b"\x02" + good[5:])
    with pytest.raises(FramingError):
        decode_frame(good[:20])
    with pytest.raises(FramingError):
        decode_frame(good[:-3])
    bad_len = bytearray(good)
    bad_len[17] = 7
    with pytest.raises(ProtocolError):
        decode_frame(bytes(bad_len))


def test_read_frame_from_stream():
    a, b = socket.socketpair()
    try:
        a.sendall(encode_frame(1, 0, 9, [3.0, 4.0]) + encode_frame(1, 0, 9, []))
        assert read_frame(b)[3].tolist() == [3.0, 4.0]
        assert read_frame(b)[3].size == 0
        a.sendall(encode_frame(1, 0, 9, [5.0])[:30])
        a.close()
        with pytest.raises(FramingError):
            read_frame(b)
    finally:
        b.close()


def _ping(comm):
    if comm.rank == 0:
        comm.isend(1, 4, np.array([1.0, 2.0])).wait()
        return None
    buf = np.empty(2)
    req = comm.irecv(0, 4, buf)
    comm.wait([req])
    return buf.tolist()


def _ordering(comm):
    if comm.rank == 0:
        for k in range(50):
            comm.isend(1, 3, np.array([float(k)]))
        return None
    return [comm.recv(0, 3, np.empty(1))[0] for _ in range(50)]


def _bidirectional(comm):
    peer = 1 - comm.rank
    data = np.full(1000, float(comm.rank))
    bufs = [np.empty(1000) for _ in range(4)]
    reqs = [comm.irecv(peer, 10 + k, bufs[k]) for k in range(4)]
    reqs += [comm.isend(peer, 10 + k, data + k) for k in range(4)]
    comm.wait(reqs)
    return [b[0] for b in bufs]


@pytest.mark.parametrize("backend", BACKENDS)
def test_delivery(backend):
    assert BACKENDS[backend](2, _ping)[1] == [1.0, 2.0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_posting_order(backend):
    assert BACKENDS[backend](2, _ordering)[1] == [float(k) for k in range(50)]


@pytest.mark.parametrize("backend", BACKENDS)
def test_bidirectional_exchange(backend):
    out = BACKENDS[backend](2, _bidirectional)
    assert out[0] == [1.0, 2.0, 3.0, 4.0]
    assert out[1] == [0.0, 1.0, 2.0, 3.0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_barrier_staggered(backend):
    def body(comm):
        time.sleep(0.05 * comm.rank)
        comm.barrier()
        return time.monotonic()

    start = time.monotonic()
    out = BACKENDS[backend](4, body)
    assert min(out) - start >= 0.15


@pytest.mark.parametrize("backend", BACKENDS)
def test_collectives(backend):
    def body(comm):
        return (
            comm.allreduce(comm.rank, "sum"),
            comm.bcast(np.arange(3.0) * (comm.rank + 1)).tolist(),
            comm.gather([float(comm.rank)] * comm.rank),
        )

    out = BACKENDS[backend](3, body)
    assert all(o[0] == 3.0 for o in out)
    assert all(o[1] == [0.0, 1.0, 2.0] for o in out)
    assert [a.tolist() for a in out[0][2]] == [[], [1.0], [2.0, 2.0]]
    assert out[1][2] is None


def test_single_rank_barrier_returns():
    InprocWorld(1).comms[0].barrier()


def test_recv_timeout():
    comm = InprocWorld(2, timeout=0.2).comms[0]
    with pytest.raises(TransportTimeout) as err:
        comm.recv(1, 5, np.empty(1))
    assert err.value.peer == 1


def test_recv_size_mismatch():
    world = InprocWorld(2)
    world.comms[0].send(1, 1, np.ones(3))
    with pytest.raises(ProtocolError):
        world.comms[1].recv(0, 1, np.empty(2))


def test_invalid_peer():
    with pytest.raises(TransportError):
        InprocWorld(2).comms[0].isend(2, 0, np.ones(1))


def test_failing_rank_aborts_the_others():
    def body(comm):
        if comm.rank == 1:
            raise ValueError("boom")
        comm.recv(1, 0, np.empty(1))

    with pytest.raises(ValueError, match="boom"):
        run_inproc(3, body, timeout=10)


def test_delayed_delivery():
    world = InprocWorld(2, delay=0.1)
    world.comms[0].send(1, 0, np.ones(1))
    t0 = time.monotonic()
    world.comms[1].recv(0, 0, np.empty(1))
    assert time.monotonic() - t0 >= 0.09


@pytest.mark.parametrize("backend", BACKENDS)
def test_stress_no_loss_and_buffer_reuse(backend):
    count = 10_000

    def body(comm):
        peer = 1 - comm.rank
        buf = np.empty(4)
        sums = []
        for k in range(count):
            buf[:] = (k, comm.rank, k * 0.5, -k)
            comm.isend(peer, 7, buf).wait()  # buffer rewritten right after wait
        for k in range(count):
            got = comm.recv(peer, 7, np.empty(4))
            sums.append(zlib.crc32(got.tobytes()))
        expected = [zlib.crc32(np.array([k, peer, k * 0.5, -k], dtype=float).tobytes()) for k in range(count)]
        return sums == expected

    assert BACKENDS[backend](2, body) == [True, True]


def test_rendezvous_single_rank():
    comm = rendezvous_connect("127.0.0.1:1", 1)
    assert (comm.rank, comm.size, comm.table) == (0, 1, [None])
    comm.barrier()
    comm.close()


def test_rendezvous_tables():
    out = run_tcp(2, lambda c: (c.rank, list(c.table)))
    assert [r for r, _ in out] == [0, 1]
    assert out[0][1] == out[1][1] and len(out[0][1]) == 2


def test_rendezvous_first_come():
    out = run_tcp(4, lambda c: c.rank, ranks=[None, None, 2, None])
    assert out == [0, 1, 2, 3]


def test_rendezvous_duplicate_rank():
    address = f"127.0.0.1:{free_port()}"
    errors = []

    def host():
        try:
            rendezvous_connect(address, 3, 0, timeout=2).close()
        except TransportError as exc:
            errors.append(exc)

    t = threading.Thread(target=host)
    t.start()
    first_ok = threading.Thread(target=lambda: _try_join(address, errors))
    first_ok.start()
    time.sleep(0.3)
    with pytest.raises(RendezvousError, match="duplicate"):
        rendezvous_connect(address, 3, 1, timeout=2)
    t.join()
    first_ok.join()
    # the run never completes: host and first joiner time out
    assert len(errors) == 2 and all(isinstance(e, TransportTimeout) for e in errors)


def _try_join(address, errors):
    try:
        rendezvous_connect(address, 3, 1, timeout=2).close()
    except TransportError as exc:
        errors.append(exc)


def test_rendezvous_missing_rank_times_out():
    address = f"127.0.0.1:{free_port()}"
    errors = []

    def join(rank):
        try:
            rendezvous_connect(address, 4, rank, timeout=1.5).close()
        except TransportError as exc:
            errors.append(exc)

    threads = [threading.Thread(target=join, args=(r,)) for r in (0, 1, 3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(errors) == 3
    assert all(isinstance(e, TransportTimeout) for e in errors)


def test_peer_disconnect_names_peer():
    def body(comm):
        if comm.rank == 1:
            comm.send(0, 1, np.ones(1))
            return None
        comm.recv(1, 1, np.empty(1))
        time.sleep(0.3)  # rank 1 has closed its end by now
        with pytest.raises(TransportError) as err:
            comm.recv(1, 2, np.empty(1))
        return err.value.peer

    assert run_tcp(2, body)[0] == 1


@pytest.mark.parametrize("seed", range(8))
def test_halo_transport_duality(seed):
    case = random_halo_case(np.random.default_rng(seed), nfields=2)
    got_tcp, expected, _ = run_halo_case(*case, np.random.default_rng(100 + seed), run_tcp)
    got_inp, _, _ = run_halo_case(*case, np.random.default_rng(100 + seed))
    for a_r, b_r, e_r in zip(got_tcp, got_inp, expected):
        for a, b, e in zip(a_r, b_r, e_r):
            assert a.tobytes() == b.tobytes() == e.tobytes()
