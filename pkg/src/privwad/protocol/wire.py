"""Framing and message codec.

A frame is a little-endian u32 byte count followed by that many bytes of
UTF-8 JSON::

    {"type": "IM_SHARE", "session": "...", "payload": {...}}

Measures travel inside ``payload["artifacts"]`` as base64 WADM blobs, which
keeps floats bit-exact across the wire.
"""

from __future__ import annotations

import base64
import binascii
import enum
import json
import struct
from dataclasses import dataclass, field
from typing import Any

from ..measures import DiscreteMeasure, MatrixFormatError, matrix_from_bytes
from ..reports import measure_to_json

VERSION = 1
DEFAULT_PORT = 7073
DEFAULT_TIMEOUT = 30.0
MAX_FRAME = 64 * 1024 * 1024

_LEN = struct.Struct("<I")


class ProtocolError(Exception):
    """Malformed traffic, unexpected messages or a failed peer."""


class PeerError(ProtocolError):
    """The peer aborted the session with an ERROR message."""


class MsgType(str, enum.Enum):
    HELLO = "HELLO"
    CONFIG = "CONFIG"
    MEASURE = "MEASURE"
    IM_SHARE = "IM_SHARE"
    DIST = "DIST"
    REPORT = "REPORT"
    ERROR = "ERROR"


@dataclass
class Message:
    type: MsgType
    session: str
    payload: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"type": self.type.value, "session": self.session, "payload": self.payload}


def encode_measure(m: DiscreteMeasure) -> dict[str, str]:
    return measure_to_json(m)


def decode_measure(obj) -> DiscreteMeasure:
    try:
        support = matrix_from_bytes(base64.b64decode(obj["support"], validate=True))
        weights = matrix_from_bytes(base64.b64decode(obj["weights"], validate=True))
        if weights.shape[1] != 1:
            raise ProtocolError(f"weights must be a column, got shape {weights.shape}")
        return DiscreteMeasure(support, weights[:, 0])
    except (KeyError, TypeError, binascii.Error, MatrixFormatError, ValueError) as exc:
        raise ProtocolError(f"bad measure blob: {exc}") from None


def encode_frame(msg: Message, max_frame: int = MAX_FRAME) -> bytes:
    body = json.dumps(msg.to_json(), separators=(",", ":"), allow_nan=True).encode("utf-8")
    if len(body) > max_frame:
        raise ProtocolError(f"frame of {len(body)} bytes exceeds limit {max_frame}")
    return _LEN.pack(len(body)) + body


def decode_body(body: bytes) -> Message:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable frame: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("frame is not a JSON object")
    try:
        mtype = MsgType(obj.get("type"))
    except ValueError:
        raise ProtocolError(f"unknown message type {obj.get('type')!r}") from None
    session, payload = obj.get("session"), obj.get("payload", {})
    if not isinstance(session, str) or not isinstance(payload, dict):
        raise ProtocolError("frame lacks a session id or payload object")
    return Message(mtype, session, payload)


class FrameReader:
    """Incremental frame decoder; feed it bytes as they arrive."""

    def __init__(self, max_frame: int = MAX_FRAME):
        self.max_frame = max_frame
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf += data
        out = []
        while len(self._buf) >= _LEN.size:
            (n,) = _LEN.unpack_from(self._buf)
            if n > self.max_frame:
                raise ProtocolError(f"declared frame length {n} exceeds limit {self.max_frame}")
            if len(self._buf) < _LEN.size + n:
                break
            body = bytes(self._buf[_LEN.size:_LEN.size + n])
            del self._buf[:_LEN.size + n]
            out.append(decode_body(body))
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)

    def close(self) -> None:
        """Raise if the stream ended inside a frame."""
        if self._buf:
            raise ProtocolError(f"stream ended with {len(self._buf)} bytes of a partial frame")


def roundtrip(msg: Message) -> Message:
    """Encode then decode, as a network hop would."""
    (m,) = FrameReader().feed(encode_frame(msg))
    return m
