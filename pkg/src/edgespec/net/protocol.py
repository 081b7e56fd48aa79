"""Length-prefixed binary framing between edge and cloud.

Layout (big-endian): ``u32 length`` of everything after it, then
``u8 type, u32 session_id, u32 round_id`` and a type-specific body.
Confidences travel as u32 fixed point with 1e-6 resolution.
"""
from __future__ import annotations

import asyncio
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Union

MAX_FRAME = 1 << 20
HELLO_MAGIC = bytes([0x50, 0x53, 0x44, 0x01])
CONF_SCALE = 1_000_000

_LEN = struct.Struct(">I")
_HEAD = struct.Struct(">BII")
_U32 = 0xFFFFFFFF


class FrameType(IntEnum):
    DRAFT_BATCH = 1
    NAV_REQUEST = 2
    NAV_RESULT = 3
    PROBE = 4
    HELLO = 5
    BYE = 6


class ByeCode(IntEnum):
    NORMAL = 0
    MALFORMED = 1
    PROTOCOL = 2
    VERSION = 3
    OVERSIZED = 4


class FrameError(ValueError):
    """Undecodable input; ``code`` is the BYE code a peer should answer with."""

    def __init__(self, message: str, code: ByeCode = ByeCode.MALFORMED):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Hello:
    seed: int
    vocab_size: int
    magic: bytes = HELLO_MAGIC


@dataclass(frozen=True)
class DraftBatch:
    epoch: int
    start: int
    tokens: tuple[int, ...]
    confidences: tuple[float, ...]
    pad: int = 0  # filler bytes standing in for the per-token payload

    def __post_init__(self):
        if len(self.tokens) != len(self.confidences):
            raise FrameError("token and confidence counts differ")


@dataclass(frozen=True)
class NavRequest:
    epoch: int
    start: int
    end: int


@dataclass(frozen=True)
class NavResult:
    n_accepted: int
    n_submitted: int
    verify_start: int
    correction: Optional[int] = None
    bonus: Optional[int] = None
    kept: Optional[bool] = None
    stale: bool = False
    nav_us: int = 0

    @property
    def next_token(self) -> int:
        return self.bonus if self.bonus is not None else self.correction

    @property
    def all_accepted(self) -> bool:
        return self.n_accepted == self.n_submitted


@dataclass(frozen=True)
class Probe:
    size: int
    pad: int = 0


@dataclass(frozen=True)
class Bye:
    code: int = ByeCode.NORMAL
    message: str = ""


Body = Union[Hello, DraftBatch, NavRequest, NavResult, Probe, Bye]

_TYPE_OF = {Hello: FrameType.HELLO, DraftBatch: FrameType.DRAFT_BATCH, NavRequest: FrameType.NAV_REQUEST,
            NavResult: FrameType.NAV_RESULT, Probe: FrameType.PROBE, Bye: FrameType.BYE}


@dataclass(frozen=True)
class Frame:
    session_id: int
    round_id: int
    body: Body

    @property
    def frame_type(self) -> FrameType:
        return _TYPE_OF[type(self.body)]


def quantize_confidence(c: float) -> float:
    return round(c * CONF_SCALE) / CONF_SCALE


def _conf_to_wire(c: float) -> int:
    if not 0.0 <= c <= 1.0:
        raise FrameError(f"confidence {c} outside [0, 1]")
    return int(round(c * CONF_SCALE))


def _check_u32(*values: int) -> None:
    for v in values:
        if not 0 <= v <= _U32:
            raise FrameError(f"value {v} does not fit in u32")


def _encode_body(body: Body) -> bytes:
    if isinstance(body, Hello):
        _check_u32(body.vocab_size)
        return body.magic + struct.pack(">QI", body.seed & 0xFFFFFFFFFFFFFFFF, body.vocab_size)
    if isinstance(body, DraftBatch):
        n = len(body.tokens)
        _check_u32(body.epoch, body.start, body.pad, *body.tokens)
        confs = [_conf_to_wire(c) for c in body.confidences]
        return (struct.pack(">IIII", body.epoch, body.start, n, body.pad)
                + struct.pack(f">{n}I", *body.tokens) + struct.pack(f">{n}I", *confs) + bytes(body.pad))
    if isinstance(body, NavRequest):
        _check_u32(body.epoch, body.start, body.end)
        return struct.pack(">III", body.epoch, body.start, body.end)
    if isinstance(body, NavResult):
        _check_u32(body.n_accepted, body.n_submitted, body.verify_start, body.nav_us)
        flags = ((body.correction is not None) | (body.bonus is not None) << 1
                 | (body.kept is not None) << 2 | bool(body.kept) << 3 | body.stale << 4)
        extra = b""
        if body.correction is not None:
            _check_u32(body.correction)
            extra += struct.pack(">I", body.correction)
        if body.bonus is not None:
            _check_u32(body.bonus)
            extra += struct.pack(">I", body.bonus)
        return struct.pack(">BIIII", flags, body.n_accepted, body.n_submitted, body.verify_start, body.nav_us) + extra
    if isinstance(body, Probe):
        _check_u32(body.size, body.pad)
        return struct.pack(">II", body.size, body.pad) + bytes(body.pad)
    if isinstance(body, Bye):
        msg = body.message.encode("utf-8")
        return struct.pack(">HI", int(body.code), len(msg)) + msg
    raise FrameError(f"cannot encode {type(body).__name__}")


def encode_frame(frame: Frame) -> bytes:
    _check_u32(frame.session_id, frame.round_id)
    payload = _HEAD.pack(frame.frame_type, frame.session_id, frame.round_id) + _encode_body(frame.body)
    if len(payload) > MAX_FRAME:
        raise FrameError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME}", ByeCode.OVERSIZED)
    return _LEN.pack(len(payload)) + payload


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.pos = offset

    def take(self, fmt: str) -> tuple:
        s = struct.calcsize(fmt)
        if self.pos + s > len(self.data):
            raise FrameError("truncated body")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += s
        return out

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FrameError("truncated body")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def _decode_payload(payload: bytes) -> Frame:
    if len(payload) < _HEAD.size:
        raise FrameError("truncated header")
    ftype, session_id, round_id = _HEAD.unpack_from(payload, 0)
    try:
        ftype = FrameType(ftype)
    except ValueError:
        raise FrameError(f"unknown frame type {ftype}") from None
    r = _Reader(payload, _HEAD.size)
    body: Body
    if ftype is FrameType.HELLO:
        magic = r.raw(4)
        if magic[:3] != HELLO_MAGIC[:3]:
            raise FrameError("bad HELLO magic")
        if magic != HELLO_MAGIC:
            raise FrameError(f"unsupported protocol version {magic[3]}", ByeCode.VERSION)
        seed, vocab = r.take(">QI")
        if seed >= 1 << 63:
            seed -= 1 << 64
        body = Hello(seed, vocab)
    elif ftype is FrameType.DRAFT_BATCH:
        epoch, start, n, pad = r.take(">IIII")
        tokens = r.take(f">{n}I")
        confs = r.take(f">{n}I")
        if any(c > CONF_SCALE for c in confs):
            raise FrameError("confidence above 1")
        r.raw(pad)
        body = DraftBatch(epoch, start, tuple(tokens), tuple(c / CONF_SCALE for c in confs), pad)
    elif ftype is FrameType.NAV_REQUEST:
        body = NavRequest(*r.take(">III"))
    elif ftype is FrameType.NAV_RESULT:
        flags, n_acc, n_sub, vstart, nav_us = r.take(">BIIII")
        if flags >> 5:
            raise FrameError("unknown NAV_RESULT flags")
        correction = r.take(">I")[0] if flags & 1 else None
        bonus = r.take(">I")[0] if flags & 2 else None
        kept = bool(flags & 8) if flags & 4 else None
        body = NavResult(n_acc, n_sub, vstart, correction, bonus, kept, bool(flags & 16), nav_us)
    elif ftype is FrameType.PROBE:
        size, pad = r.take(">II")
        r.raw(pad)
        body = Probe(size, pad)
    else:
        code, n = r.take(">HI")
        try:
            msg = r.raw(n).decode("utf-8")
        except UnicodeDecodeError:
            raise FrameError("BYE message is not UTF-8") from None
        body = Bye(code, msg)
    if r.pos != len(payload):
        raise FrameError(f"{len(payload) - r.pos} trailing bytes")
    return Frame(session_id, round_id, body)


def decode_frame(data: bytes) -> Frame:
    """Decode exactly one frame (length prefix included)."""
    if len(data) < _LEN.size:
        raise FrameError("truncated header")
    (length,) = _LEN.unpack_from(data, 0)
    if length > MAX_FRAME:
        raise FrameError(f"frame of {length} bytes exceeds {MAX_FRAME}", ByeCode.OVERSIZED)
    if len(data) < _LEN.size + length:
        raise FrameError("truncated frame")
    if len(data) > _LEN.size + length:
        raise FrameError("trailing bytes after frame")
    return _decode_payload(data[_LEN.size:])


async def read_frame(reader: asyncio.StreamReader) -> Optional[Frame]:
    """Next frame from a stream; None on a clean end of stream."""
    try:
        head = await reader.readexactly(_LEN.size)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None
        raise FrameError("truncated header") from None
    (length,) = _LEN.unpack(head)
    if length > MAX_FRAME:
        raise FrameError(f"frame of {length} bytes exceeds {MAX_FRAME}", ByeCode.OVERSIZED)
    try:
        payload = await reader.readexactly(length)
    except asyncio.IncompleteReadError:
        raise FrameError("truncated frame") from None
    return _decode_payload(payload)
