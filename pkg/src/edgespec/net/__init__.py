"""Loopback/LAN harness: framed edge-cloud protocol over a stream socket."""
from .edge import EdgeConfig, EdgeError, EdgeResult, edge_run, run_edge
from .protocol import (
    Bye, ByeCode, DraftBatch, Frame, FrameError, FrameType, Hello, NavRequest, NavResult, Probe,
    decode_frame, encode_frame, read_frame,
)
from .server import CloudServer, ServerConfig, serve
from .throttle import Shaper, TokenBucket

__all__ = [
    "Bye", "ByeCode", "CloudServer", "DraftBatch", "EdgeConfig", "EdgeError", "EdgeResult", "Frame",
    "FrameError", "FrameType", "Hello", "NavRequest", "NavResult", "Probe", "ServerConfig", "Shaper",
    "TokenBucket", "decode_frame", "edge_run", "encode_frame", "read_frame", "run_edge", "serve",
]
