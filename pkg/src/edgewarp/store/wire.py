"""Binary framing for store-to-store synchronization.

Frame layout (all integers big-endian)::

    magic 0xED6E (2) | type u8 | payload_len u32 | payload | crc32(payload) u32

Payload layouts::

    OPEN_SESSION  user | session_id u64 | t_ms u64 | phase u8
    OBJECT        user | key | version u64 | value_len u32 | value
    TOMBSTONE     user | key | t_ms u64
    COMMIT        user | session_id u64 | t_ms u64
    ACK           acked_type u8 | status u8 | session_id u64 | user | key | version u64
    ABORT         user | session_id u64 | reason u8

where ``user`` is ``len u16 | utf-8 bytes`` and ``key`` is ``len u16 | bytes``.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Optional, Union

MAGIC = 0xED6E
_HEADER = struct.Struct(">HBI")
_CRC = struct.Struct(">I")
HEADER_SIZE = _HEADER.size
TRAILER_SIZE = _CRC.size
FRAME_OVERHEAD = HEADER_SIZE + TRAILER_SIZE
MAX_PAYLOAD = 64 * 1024 * 1024


class FrameType(IntEnum):
    OPEN_SESSION = 0
    OBJECT = 1
    TOMBSTONE = 2
    COMMIT = 3
    ACK = 4
    ABORT = 5


class Phase(IntEnum):
    BACKGROUND = 0
    BLOCKING = 1


class AckStatus(IntEnum):
    OK = 0
    CHECKSUM_MISMATCH = 1
    ERROR = 2


class FrameError(ValueError):
    """Malformed frame: bad magic, unknown type, truncated or oversize."""


class ChecksumMismatch(FrameError):
    code = "CHECKSUM_MISMATCH"

    def __init__(self, frame_type: int, payload: bytes) -> None:
        super().__init__(f"crc mismatch on frame type {frame_type}")
        self.frame_type = frame_type
        self.payload = payload


@dataclass(frozen=True)
class OpenSession:
    user_id: str
    session_id: int
    t_ms: int
    phase: Phase


@dataclass(frozen=True)
class ObjectFrame:
    user_id: str
    key: bytes
    version: int
    value: bytes


@dataclass(frozen=True)
class Tombstone:
    user_id: str
    key: bytes
    t_ms: int


@dataclass(frozen=True)
class Commit:
    user_id: str
    session_id: int
    t_ms: int


@dataclass(frozen=True)
class Ack:
    acked_type: FrameType
    status: AckStatus
    session_id: int
    user_id: str
    key: bytes = b""
    version: int = 0


@dataclass(frozen=True)
class Abort:
    user_id: str
    session_id: int
    reason: int = 0


Message = Union[OpenSession, ObjectFrame, Tombstone, Commit, Ack, Abort]


def _user(user_id: str) -> bytes:
    raw = user_id.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


def _key(key: bytes) -> bytes:
    return struct.pack(">H", len(key)) + key


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FrameError("payload truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def user(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def key(self) -> bytes:
        return self.take(self.u16())

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FrameError(f"{len(self.buf) - self.pos} trailing payload bytes")


def encode_payload(msg: Message) -> tuple[FrameType, bytes]:
    if isinstance(msg, ObjectFrame):
        return FrameType.OBJECT, b"".join((
            _user(msg.user_id), _key(msg.key),
            struct.pack(">QI", msg.version, len(msg.value)), msg.value,
        ))
    if isinstance(msg, OpenSession):
        return FrameType.OPEN_SESSION, _user(msg.user_id) + struct.pack(">QQB", msg.session_id, msg.t_ms, msg.phase)
    if isinstance(msg, Tombstone):
        return FrameType.TOMBSTONE, _user(msg.user_id) + _key(msg.key) + struct.pack(">Q", msg.t_ms)
    if isinstance(msg, Commit):
        return FrameType.COMMIT, _user(msg.user_id) + struct.pack(">QQ", msg.session_id, msg.t_ms)
    if isinstance(msg, Ack):
        return FrameType.ACK, b"".join((
            struct.pack(">BBQ", msg.acked_type, msg.status, msg.session_id),
            _user(msg.user_id), _key(msg.key), struct.pack(">Q", msg.version),
        ))
    if isinstance(msg, Abort):
        return FrameType.ABORT, _user(msg.user_id) + struct.pack(">QB", msg.session_id, msg.reason)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def decode_payload(frame_type: int, payload: bytes) -> Message:
    try:
        return _decode_payload(frame_type, payload)
    except (UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, FrameError):
            raise
        raise FrameError(f"bad field in payload: {exc}") from exc


def _decode_payload(frame_type: int, payload: bytes) -> Message:
    r = _Reader(payload)
    msg: Message
    if frame_type == FrameType.OBJECT:
        user, key, version = r.user(), r.key(), r.u64()
        msg = ObjectFrame(user, key, version, r.take(r.u32()))
    elif frame_type == FrameType.OPEN_SESSION:
        msg = OpenSession(r.user(), r.u64(), r.u64(), Phase(r.u8()))
    elif frame_type == FrameType.TOMBSTONE:
        msg = Tombstone(r.user(), r.key(), r.u64())
    elif frame_type == FrameType.COMMIT:
        msg = Commit(r.user(), r.u64(), r.u64())
    elif frame_type == FrameType.ACK:
        acked, status, sid = r.u8(), r.u8(), r.u64()
        msg = Ack(FrameType(acked), AckStatus(status), sid, r.user(), r.key(), r.u64())
    elif frame_type == FrameType.ABORT:
        msg = Abort(r.user(), r.u64(), r.u8())
    else:
        raise FrameError(f"unknown frame type {frame_type}")
    r.done()
    return msg


def encode_frame(frame_type: int, payload: bytes) -> bytes:
    if not 0 <= frame_type <= 255:
        raise ValueError("frame_type must fit in a byte")
    if len(payload) > MAX_PAYLOAD:
        raise ValueError("payload too large")
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    return _HEADER.pack(MAGIC, frame_type, len(payload)) + payload + _CRC.pack(crc)


def encode(msg: Message) -> bytes:
    return encode_frame(*encode_payload(msg))


def split_frame(buf: bytes) -> tuple[int, bytes, bytes]:
    """Parse one frame from the front of ``buf``.

    Returns ``(frame_type, payload, rest)``; raises :class:`ChecksumMismatch`
    when the header is sound but the payload CRC is wrong.
    """
    if len(buf) < HEADER_SIZE:
        raise FrameError("frame truncated")
    magic, ftype, length = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FrameError(f"bad magic 0x{magic:04X}")
    if length > MAX_PAYLOAD:
        raise FrameError("payload length exceeds limit")
    end = HEADER_SIZE + length
    if len(buf) < end + TRAILER_SIZE:
        raise FrameError("frame truncated")
    payload = buf[HEADER_SIZE:end]
    (crc,) = _CRC.unpack_from(buf, end)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumMismatch(ftype, payload)
    return ftype, payload, buf[end + TRAILER_SIZE:]


def decode(frame: bytes) -> Message:
    ftype, payload, rest = split_frame(frame)
    if rest:
        raise FrameError("trailing bytes after frame")
    return decode_payload(ftype, payload)


def _read_exact(stream: BinaryIO, n: int) -> Optional[bytes]:
    chunks = []
    while n:
        chunk = stream.read(n)
        if not chunk:
            return None
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(stream: BinaryIO) -> Optional[bytes]:
    """Read one raw frame from a byte stream; ``None`` on clean EOF."""
    header = _read_exact(stream, HEADER_SIZE)
    if header is None:
        return None
    magic, _, length = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FrameError(f"bad magic 0x{magic:04X}")
    if length > MAX_PAYLOAD:
        raise FrameError("payload length exceeds limit")
    rest = _read_exact(stream, length + TRAILER_SIZE)
    if rest is None:
        raise FrameError("stream closed mid-frame")
    return header + rest
