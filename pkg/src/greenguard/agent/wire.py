"""Length-prefixed binary frames exchanged between sensor agents and the hub.

Frame layout (10-byte header, then payload)::

    magic "ZRZ1" | version u8 (=1) | msg_type u8 | payload_len u32 big-endian | payload

FlowFeatures payload (little-endian)::

    sensor_id u32 | first_ts f64 | name_len u16 | protocol_name utf-8 |
    feature_count u16 | features f32[feature_count]

Heartbeat and Ack frames carry an empty payload.
"""

import asyncio
import enum
import struct
from dataclasses import dataclass

from ..errors import BadFrameMagic, LengthOverflow, MalformedPayload, UnknownMsgType, UnknownVersion

FRAME_MAGIC = b"ZRZ1"
WIRE_VERSION = 1
MAX_PAYLOAD = 1 << 20
HEADER = struct.Struct(">4sBBI")
HEADER_SIZE = HEADER.size

_FF_HEAD = struct.Struct("<Id")
_U16 = struct.Struct("<H")


class MsgType(enum.IntEnum):
    FLOW_FEATURES = 1
    HEARTBEAT = 2
    ACK = 3


@dataclass(frozen=True)
class FlowFeatures:
    sensor_id: int
    first_ts: float
    protocol_name: str
    features: tuple

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))


@dataclass(frozen=True)
class Heartbeat:
    pass


@dataclass(frozen=True)
class Ack:
    pass


def _payload(msg):
    if isinstance(msg, FlowFeatures):
        name = msg.protocol_name.encode("utf-8")
        n = len(msg.features)
        if len(name) > 0xFFFF or n > 0xFFFF:
            raise ValueError("protocol name or feature array too long")
        return (MsgType.FLOW_FEATURES,
                _FF_HEAD.pack(msg.sensor_id, msg.first_ts) + _U16.pack(len(name)) + name
                + _U16.pack(n) + struct.pack(f"<{n}f", *msg.features))
    if isinstance(msg, Heartbeat):
        return MsgType.HEARTBEAT, b""
    if isinstance(msg, Ack):
        return MsgType.ACK, b""
    raise TypeError(f"cannot encode {type(msg).__name__}")


def encode_frame(msg):
    msg_type, payload = _payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise LengthOverflow(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(FRAME_MAGIC, WIRE_VERSION, msg_type, len(payload)) + payload


def _decode_payload(msg_type, payload):
    if msg_type == MsgType.HEARTBEAT or msg_type == MsgType.ACK:
        if payload:
            raise MalformedPayload(f"{MsgType(msg_type).name} frame must have an empty payload")
        return Heartbeat() if msg_type == MsgType.HEARTBEAT else Ack()
    try:
        sensor_id, first_ts = _FF_HEAD.unpack_from(payload, 0)
        off = _FF_HEAD.size
        (name_len,) = _U16.unpack_from(payload, off)
        off += 2
        name = payload[off:off + name_len]
        if len(name) != name_len:
            raise MalformedPayload("protocol name runs past the payload")
        off += name_len
        (count,) = _U16.unpack_from(payload, off)
        off += 2
    except struct.error as exc:
        raise MalformedPayload(f"short FlowFeatures payload: {exc}") from None
    if len(payload) - off != 4 * count:
        raise MalformedPayload(f"feature_count {count} does not match {len(payload) - off} payload bytes")
    try:
        text = name.decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedPayload("protocol name is not UTF-8") from None
    return FlowFeatures(sensor_id, first_ts, text, struct.unpack_from(f"<{count}f", payload, off))


def parse_header(header):
    magic, version, msg_type, length = HEADER.unpack(header)
    if magic != FRAME_MAGIC:
        raise BadFrameMagic(f"bad frame magic {magic!r}")
    if version != WIRE_VERSION:
        raise UnknownVersion(f"wire version {version}")
    if msg_type not in MsgType._value2member_map_:
        raise UnknownMsgType(f"message type {msg_type}")
    if length > MAX_PAYLOAD:
        raise LengthOverflow(f"payload_len {length} exceeds {MAX_PAYLOAD}")
    return msg_type, length


class FrameDecoder:
    """Incremental decoder; feed it bytes in any fragmentation.

    Any protocol error leaves the decoder unusable: the stream cannot be
    resynchronized and the connection must be dropped.
    """

    def __init__(self):
        self._buf = bytearray()
        self._need = None  # (msg_type, payload_len) once a header is parsed
        self.failed = False

    def feed(self, data):
        if self.failed:
            raise MalformedPayload("decoder already failed")
        self._buf += data
        out = []
        try:
            while True:
                if self._need is None:
                    if len(self._buf) < HEADER_SIZE:
                        if not FRAME_MAGIC.startswith(bytes(self._buf[:4])):
                            raise BadFrameMagic(f"bad frame magic {bytes(self._buf[:4])!r}")
                        break
                    self._need = parse_header(bytes(self._buf[:HEADER_SIZE]))
                    del self._buf[:HEADER_SIZE]
                msg_type, length = self._need
                if len(self._buf) < length:
                    break
                payload = bytes(self._buf[:length])
                del self._buf[:length]
                self._need = None
                out.append(_decode_payload(msg_type, payload))
        except Exception:
            self.failed = True
            raise
        return out

    @property
    def pending(self):
        return len(self._buf)


def decode_frame(data):
    """Decode exactly one complete frame from ``data``."""
    dec = FrameDecoder()
    msgs = dec.feed(data)
    if len(msgs) != 1 or dec.pending:
        raise MalformedPayload(f"expected one complete frame, got {len(msgs)} and {dec.pending} spare bytes")
    return msgs[0]


def decode_stream(chunks):
    """Decode a sequence of byte chunks into messages."""
    dec = FrameDecoder()
    out = []
    for chunk in chunks:
        out.extend(dec.feed(chunk))
    return out


async def read_message(reader):
    """Read one message from an ``asyncio.StreamReader``; ``None`` at clean EOF."""
    try:
        header = await reader.readexactly(HEADER_SIZE)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None
        raise MalformedPayload("connection closed inside a frame header") from None
    msg_type, length = parse_header(header)
    try:
        payload = await reader.readexactly(length) if length else b""
    except asyncio.IncompleteReadError:
        raise MalformedPayload("connection closed inside a frame payload") from None
    return _decode_payload(msg_type, payload)
