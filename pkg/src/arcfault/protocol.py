"""Length-prefixed wire messages between devices and the cloud.

Frame layout (little-endian): 1-byte type tag, 4-byte body length, body.
Decoding never raises anything but ProtocolError subclasses on malformed
input, and decode(encode(m)) == m for every valid message.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import IntEnum

HEADER = struct.Struct("<BI")


class MessageType(IntEnum):
    ALARM_UPLOAD = 1
    OTA_PUSH = 2
    OTA_ACK = 3
    METRICS_REPORT = 4


class ProtocolError(ValueError):
    """Base class for malformed wire data."""


class TruncatedMessage(ProtocolError):
    pass


class UnknownMessageType(ProtocolError):
    pass


class TrailingBytes(ProtocolError):
    pass


@dataclass(frozen=True)
class Message:
    msg_type: MessageType
    body: bytes = b""


def encode_message(message: Message) -> bytes:
    return HEADER.pack(int(message.msg_type), len(message.body)) + message.body


def decode_message(data: bytes) -> Message:
    if len(data) < HEADER.size:
        raise TruncatedMessage(f"need at least {HEADER.size} bytes, got {len(data)}")
    tag, length = HEADER.unpack_from(data)
    try:
        msg_type = MessageType(tag)
    except ValueError as exc:
        raise UnknownMessageType(f"unknown message type tag {tag}") from exc
    end = HEADER.size + length
    if len(data) < end:
        raise TruncatedMessage(f"body declares {length} bytes, frame has {len(data) - HEADER.size}")
    if len(data) > end:
        raise TrailingBytes(f"{len(data) - end} bytes after the declared body")
    return Message(msg_type=msg_type, body=data[HEADER.size:end])


def json_body(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def parse_json_body(message: Message) -> dict:
    try:
        return json.loads(message.body.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"body is not valid JSON: {exc}") from exc
