"""Append-only, checksummed event ledger.

One record per line: an 8-hex CRC32 of the JSON payload, a space, the
payload.  Replay stops at the first record that fails its checksum or
is truncated, which is exactly the tail a crash mid-write leaves; the
surviving prefix reconstructs the full service state.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator


class LedgerCorruption(Exception):
    pass


@dataclass(frozen=True)
class LedgerEntry:
    offset: int
    record: dict


def _encode(record: dict) -> bytes:
    payload = json.dumps(record, separators=(",", ":"), sort_keys=True).encode()
    crc = zlib.crc32(payload)
    return b"%08x %s\n" % (crc, payload)


def _decode(line: bytes) -> dict | None:
    line = line.rstrip(b"\n")
    if len(line) < 10 or line[8:9] != b" ":
        return None
    try:
        crc = int(line[:8], 16)
    except ValueError:
        return None
    payload = line[9:]
    if zlib.crc32(payload) != crc:
        return None
    try:
        return json.loads(payload)
    except json.JSONDecodeError:
        return None


def read_entries(path) -> Iterator[LedgerEntry]:
    """Replay a ledger file, silently dropping a corrupt/partial tail."""
    path = Path(path)
    if not path.exists():
        return
    offset = 0
    with path.open("rb") as fh:
        for line in fh:
            record = _decode(line)
            if record is None:
                break  # crash-truncated tail
            yield LedgerEntry(offset, record)
            offset += 1


class Ledger:
    """Writer handle; `append` flushes each record to the OS immediately."""

    def __init__(self, path, fsync: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self._count = sum(1 for _ in read_entries(self.path))
        self._fh = self.path.open("ab")

    def __len__(self) -> int:
        return self._count

    def append(self, record: dict) -> int:
        self._fh.write(_encode(record))
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())
        offset = self._count
        self._count += 1
        return offset

    def close(self) -> None:
        self._fh.close()
