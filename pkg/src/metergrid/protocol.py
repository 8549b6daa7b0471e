"""Device-to-server wire protocol.

Messages are length-delimited JSON texts (netstring framing:
``<length>:<payload>,``) over a persistent stream connection.  Every
pulse report is answered by a one-message ack carrying
accept/duplicate/reject plus the server's last_seq, which is what makes
redelivery idempotent and gaps detectable.
"""

from __future__ import annotations

import json
import socket
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

MAX_MESSAGE = 64 * 1024


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class PulseReport:
    chip_id: str
    seq: int
    pulse_delta: int
    reported_at: datetime
    hostname: str
    mac: str
    ip: str

    def __post_init__(self):
        if self.seq < 0:
            raise ValueError("seq must be non-negative")
        if self.pulse_delta < 1:
            raise ValueError("pulse_delta must be >= 1")
        if self.reported_at.tzinfo is None:
            raise ValueError("reported_at must be timezone-aware")

    def to_message(self) -> dict:
        msg = asdict(self)
        msg["reported_at"] = self.reported_at.isoformat()
        msg["type"] = "report"
        return msg

    @classmethod
    def from_message(cls, msg: dict) -> "PulseReport":
        try:
            return cls(
                chip_id=str(msg["chip_id"]),
                seq=int(msg["seq"]),
                pulse_delta=int(msg["pulse_delta"]),
                reported_at=datetime.fromisoformat(msg["reported_at"]).astimezone(
                    timezone.utc
                ),
                hostname=str(msg["hostname"]),
                mac=str(msg["mac"]),
                ip=str(msg["ip"]),
            )
        except (KeyError, ValueError) as exc:
            raise ProtocolError(f"bad report message: {exc}") from exc


def encode_message(msg: dict) -> bytes:
    payload = json.dumps(msg, separators=(",", ":")).encode()
    return b"%d:%s," % (len(payload), payload)


class MessageReader:
    """Incremental netstring decoder for a byte stream."""

    def __init__(self):
        self._buf = bytearray()
        self._ready: list[dict] = []

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)
        while True:
            msg = self._next()
            if msg is None:
                break
            self._ready.append(msg)

    def pop(self) -> dict | None:
        """Next decoded message, or None if no complete one is buffered."""
        return self._ready.pop(0) if self._ready else None

    def _next(self):
        sep = self._buf.find(b":")
        if sep < 0:
            if len(self._buf) > 20:
                raise ProtocolError("missing length delimiter")
            return None
        try:
            length = int(self._buf[:sep])
        except ValueError:
            raise ProtocolError(f"bad length prefix {bytes(self._buf[:sep])!r}")
        if length > MAX_MESSAGE:
            raise ProtocolError(f"message of {length} bytes exceeds limit")
        end = sep + 1 + length
        if len(self._buf) < end + 1:
            return None
        if self._buf[end:end + 1] != b",":
            raise ProtocolError("missing trailing comma")
        payload = bytes(self._buf[sep + 1:end])
        del self._buf[:end + 1]
        try:
            return json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"bad JSON payload: {exc}") from exc


def send_message(sock: socket.socket, msg: dict) -> None:
    sock.sendall(encode_message(msg))


def recv_message(sock: socket.socket, reader: MessageReader) -> dict | None:
    """Block until one full message arrives; None on clean EOF."""
    while True:
        msg = reader.pop()
        if msg is not None:
            return msg
        data = sock.recv(4096)
        if not data:
            return None
        reader.feed(data)
