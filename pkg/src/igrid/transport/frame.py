"""TCP wire frame.

Header (25 bytes, little-endian)::

    magic    4s   b"IGG1"
    version  u8   1
    src      u32
    dst      u32
    tag      u32
    length   u64  payload bytes, a multiple of 8

followed by ``length`` bytes of little-endian float64 values.
"""
import struct

import numpy as np

from ..errors import FramingError, ProtocolError

MAGIC = b"IGG1"
VERSION = 1
HEADER = struct.Struct("<4sBIIIQ")
HEADER_SIZE = HEADER.size  # 25


def encode_frame(src, dst, tag, payload):
    data = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    return HEADER.pack(MAGIC, VERSION, src, dst, tag, len(data)) + data


def decode_header(header):
    if len(header) < HEADER_SIZE:
        raise FramingError(f"truncated header: {len(header)} of {HEADER_SIZE} bytes")
    magic, version, src, dst, tag, length = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad frame magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported frame version {version}")
    if length % 8:
        raise ProtocolError(f"payload length {length} is not a multiple of 8")
    return src, dst, tag, length


def decode_frame(data):
    """Decode one complete frame; returns ``(src, dst, tag, payload)``."""
    src, dst, tag, length = decode_header(data)
    end = HEADER_SIZE + length
    if len(data) < end:
        raise FramingError(f"truncated payload: {len(data) - HEADER_SIZE} of {length} bytes")
    if len(data) > end:
        raise FramingError(f"{len(data) - end} trailing bytes after frame")
    payload = np.frombuffer(data, dtype="<f8", offset=HEADER_SIZE).astype(np.float64)
    return src, dst, tag, payload


def _recv_exact(sock, n):
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:])
        if k == 0:
            if got == 0:
                return None
            raise FramingError(f"stream closed after {got} of {n} bytes")
        got += k
    return bytes(buf)


def read_frame(sock):
    """Read one frame from a stream socket; None on a clean EOF."""
    header = _recv_exact(sock, HEADER_SIZE)
    if header is None:
        return None
    src, dst, tag, length = decode_header(header)
    body = _recv_exact(sock, length) if length else b""
    if body is None:
        raise FramingError("stream closed between header and payload")
    return src, dst, tag, np.frombuffer(body, dtype="<f8").astype(np.float64)
