"""Pluggable point-to-point message transports."""
from .base import Communicator, Mailbox, Request, waitall
from .frame import HEADER_SIZE, decode_frame, encode_frame
from .inproc import InprocComm, InprocWorld, run_inproc, self_comm
from .tcp import TcpComm, connect_from_env, free_port, rendezvous_connect

__all__ = [
    "Communicator",
    "Mailbox",
    "Request",
    "waitall",
    "HEADER_SIZE",
    "decode_frame",
    "encode_frame",
    "InprocComm",
    "InprocWorld",
    "run_inproc",
    "self_comm",
    "TcpComm",
    "connect_from_env",
    "free_port",
    "rendezvous_connect",
]
