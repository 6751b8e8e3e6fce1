"""Framed message protocol shared by every transport.

Frame layout (big-endian lengths)::

    "PGS1" | kind:1 | graph_id_len:2 | graph_id | session_id:16 | payload_len:4 | payload

Payloads are a JSON manifest followed by length-prefixed binary blobs::

    manifest_len:4 | manifest (utf-8 JSON) | count:4 | (blob_len:4 | blob)*
"""
import enum
import json
import struct
from dataclasses import dataclass, field

from .errors import FrameError

MAGIC = b"PGS1"
MAX_PAYLOAD = 256 * 1024 * 1024
SESSION_ID_LEN = 16
NO_SESSION = bytes(SESSION_ID_LEN)


class Kind(enum.IntEnum):
    SUBMIT_ROW = 1
    SUBMIT_ACK = 2
    POOL_REQUEST = 3
    MVM_REQUEST = 4
    MVM_RESPONSE = 5
    ANALYZE_META = 6
    ERROR = 7


RESPONSE_KIND = {
    Kind.SUBMIT_ROW: Kind.SUBMIT_ACK,
    Kind.POOL_REQUEST: Kind.MVM_RESPONSE,
    Kind.MVM_REQUEST: Kind.MVM_RESPONSE,
    Kind.ANALYZE_META: Kind.ANALYZE_META,
}


@dataclass(frozen=True)
class ProtocolMessage:
    kind: Kind
    graph_id: str = ""
    session_id: bytes = NO_SESSION
    payload: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if len(self.session_id) != SESSION_ID_LEN:
            raise ValueError("session id must be 16 bytes")


def frame_message(msg):
    gid = msg.graph_id.encode("utf-8")
    if len(gid) > 0xFFFF:
        raise ValueError("graph id too long")
    if len(msg.payload) > MAX_PAYLOAD:
        raise ValueError("payload exceeds 256 MiB")
    return b"".join(
        (
            MAGIC,
            struct.pack(">BH", int(msg.kind), len(gid)),
            gid,
            msg.session_id,
            struct.pack(">I", len(msg.payload)),
            msg.payload,
        )
    )


class _Reader:
    """Pulls exact byte counts from a buffer or stream, tracking the offset."""

    def __init__(self, data=None, stream=None):
        self.data = data
        self.stream = stream
        self.pos = 0

    def take(self, n, what):
        if self.stream is not None:
            chunks, need = [], n
            while need:
                chunk = self.stream.read(need)
                if not chunk:
                    if not chunks and need == n and self.pos == 0 and what == "magic":
                        raise EOFError
                    raise FrameError(f"truncated {what}", self.pos + n - need)
                chunks.append(chunk)
                need -= len(chunk)
            out = b"".join(chunks)
        else:
            out = self.data[self.pos : self.pos + n]
            if len(out) != n:
                raise FrameError(f"truncated {what}", self.pos + len(out))
        self.pos += n
        return out


def _parse(reader):
    if reader.take(4, "magic") != MAGIC:
        raise FrameError("bad magic", 0)
    kind_byte, glen = struct.unpack(">BH", reader.take(3, "header"))
    try:
        kind = Kind(kind_byte)
    except ValueError:
        raise FrameError(f"unknown message kind {kind_byte}", 4) from None
    gid_at = reader.pos
    raw_gid = reader.take(glen, "graph id")
    try:
        gid = raw_gid.decode("utf-8")
    except UnicodeDecodeError:
        raise FrameError("graph id is not utf-8", gid_at) from None
    sid = reader.take(SESSION_ID_LEN, "session id")
    len_at = reader.pos
    (plen,) = struct.unpack(">I", reader.take(4, "payload length"))
    if plen > MAX_PAYLOAD:
        raise FrameError(f"payload length {plen} exceeds 256 MiB", len_at)
    payload = reader.take(plen, "payload")
    return ProtocolMessage(kind, gid, sid, payload)


def parse_frame(data):
    """Parse exactly one frame; raises FrameError with the failing byte offset."""
    data = bytes(data)
    reader = _Reader(data)
    msg = _parse(reader)
    if reader.pos != len(data):
        raise FrameError("trailing bytes after frame", reader.pos)
    return msg


def read_frame(stream):
    """Read one frame from a binary stream; EOFError on a clean end of stream."""
    return _parse(_Reader(stream=stream))


def pack_payload(manifest, blobs=()):
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [struct.pack(">I", len(head)), head, struct.pack(">I", len(blobs))]
    for b in blobs:
        parts.append(struct.pack(">I", len(b)))
        parts.append(bytes(b))
    return b"".join(parts)


def unpack_payload(payload):
    """Inverse of ``pack_payload``; offsets in errors are payload-relative."""
    reader = _Reader(bytes(payload))
    (hlen,) = struct.unpack(">I", reader.take(4, "manifest length"))
    head_at = reader.pos
    try:
        manifest = json.loads(reader.take(hlen, "manifest").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FrameError("manifest is not valid JSON", head_at) from None
    if not isinstance(manifest, dict):
        raise FrameError("manifest must be a JSON object", head_at)
    (count,) = struct.unpack(">I", reader.take(4, "blob count"))
    blobs = []
    for _ in range(count):
        (blen,) = struct.unpack(">I", reader.take(4, "blob length"))
        blobs.append(reader.take(blen, "blob"))
    if reader.pos != len(reader.data):
        raise FrameError("trailing bytes after payload", reader.pos)
    return manifest, blobs


def error_message(request_or_none, exc, offset=None):
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if offset is not None:
        doc["offset"] = offset
    gid = request_or_none.graph_id if request_or_none else ""
    sid = request_or_none.session_id if request_or_none else NO_SESSION
    return ProtocolMessage(Kind.ERROR, gid, sid, pack_payload(doc))
