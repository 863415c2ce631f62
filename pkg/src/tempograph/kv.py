"""Ordered byte-key store persisted as an append-only record log.

Record layout (all integers big-endian)::

    u32 key_len | key | u32 val_len | value | u32 crc32(key_len..value)

A ``val_len`` of 0xFFFFFFFF marks a deletion and carries no value bytes.
On open the log is replayed into an in-memory ordered index; a torn record
at the tail is truncated away. ``compact`` rewrites only live records.

Readers work on an immutable :class:`KVView`; each ``write_batch`` builds a
new view and publishes it with a single reference swap.
"""

from __future__ import annotations

import bisect
import os
import struct
import threading
import zlib
from pathlib import Path

from .errors import CorruptRecord

_U32 = struct.Struct(">I")
TOMBSTONE = 0xFFFFFFFF
LOG_NAME = "history.log"


class KVView:
    """Immutable snapshot of the index: sorted keys plus a key->value map."""

    __slots__ = ("keys", "data")

    def __init__(self, keys, data):
        self.keys = keys
        self.data = data

    def __len__(self):
        return len(self.keys)

    def get(self, key):
        return self.data.get(key)

    def seek(self, key) -> int:
        """Index of the first key >= ``key``."""
        return bisect.bisect_left(self.keys, key)

    def scan(self, start=b"", prefix=b""):
        """Ascending ``(key, value)`` pairs from ``start`` while keys share ``prefix``."""
        keys, data = self.keys, self.data
        i = bisect.bisect_left(keys, max(start, prefix))
        n = len(keys)
        while i < n:
            key = keys[i]
            if not key.startswith(prefix):
                return
            yield key, data[key]
            i += 1

    def scan_reverse(self, start, prefix=b""):
        """Descending pairs from the last key <= ``start`` while keys share ``prefix``."""
        keys, data = self.keys, self.data
        i = bisect.bisect_right(keys, start) - 1
        while i >= 0:
            key = keys[i]
            if not key.startswith(prefix):
                return
            yield key, data[key]
            i -= 1

    def items(self):
        data = self.data
        return ((k, data[k]) for k in self.keys)


def _frame(key: bytes, value: bytes | None) -> bytes:
    if value is None:
        body = _U32.pack(len(key)) + key + _U32.pack(TOMBSTONE)
    else:
        body = _U32.pack(len(key)) + key + _U32.pack(len(value)) + value
    return body + _U32.pack(zlib.crc32(body))


def read_records(raw: bytes):
    """Parse a log image; returns ``(records, good_length)`` stopping at a torn tail."""
    records = []
    pos = 0
    n = len(raw)
    while pos < n:
        start = pos
        if pos + 4 > n:
            break
        (klen,) = _U32.unpack_from(raw, pos)
        pos += 4
        if pos + klen + 4 > n:
            break
        key = raw[pos:pos + klen]
        pos += klen
        (vlen,) = _U32.unpack_from(raw, pos)
        pos += 4
        if vlen == TOMBSTONE:
            value = None
        else:
            if pos + vlen > n:
                break
            value = raw[pos:pos + vlen]
            pos += vlen
        if pos + 4 > n:
            break
        (crc,) = _U32.unpack_from(raw, pos)
        if zlib.crc32(raw[start:pos]) != crc:
            if pos + 4 == n:
                break
            raise CorruptRecord(f"checksum mismatch in record at byte {start}")
        pos += 4
        records.append((key, value))
    else:
        return records, n
    return records, start


class OrderedKV:
    """Single-writer, many-reader ordered map with optional file persistence."""

    def __init__(self, directory: str | os.PathLike | None = None, fsync: bool = False):
        self.directory = Path(directory) if directory is not None else None
        self.fsync = fsync
        self._write_lock = threading.Lock()
        self._fh = None
        self._closed = False
        self._garbage = 0
        data = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            path = self.directory / LOG_NAME
            if path.exists():
                raw = path.read_bytes()
                records, good = read_records(raw)
                for key, value in records:
                    if value is None:
                        data.pop(key, None)
                    else:
                        data[key] = value
                self._garbage = len(records) - len(data)
                if good != len(raw):
                    with open(path, "r+b") as fh:
                        fh.truncate(good)
            self._fh = open(path, "ab")
        self._view = KVView(sorted(data), data)

    @property
    def path(self):
        return None if self.directory is None else self.directory / LOG_NAME

    def view(self) -> KVView:
        return self._view

    def get(self, key):
        return self._view.data.get(key)

    def __len__(self):
        return len(self._view.keys)

    def put(self, key: bytes, value: bytes) -> None:
        self.write_batch([(key, value)])

    def delete(self, key: bytes) -> None:
        self.write_batch([], [key])

    def write_batch(self, puts=(), deletes=()) -> None:
        """Apply puts then deletes durably and publish them as one new view."""
        puts = list(puts)
        deletes = list(deletes)
        if not puts and not deletes:
            return
        for key, value in puts:
            if not isinstance(key, bytes) or not isinstance(value, bytes):
                raise TypeError("keys and values must be bytes")
        with self._write_lock:
            if self._closed:
                raise ValueError("the store is closed")
            old = self._view
            if self._fh is not None:
                buf = bytearray()
                for key, value in puts:
                    buf += _frame(key, value)
                for key in deletes:
                    buf += _frame(key, None)
                self._fh.write(buf)
                self._fh.flush()
                if self.fsync:
                    os.fsync(self._fh.fileno())
            data = dict(old.data)
            fresh = []
            for key, value in puts:
                if key in data:
                    self._garbage += 1
                else:
                    fresh.append(key)
                data[key] = value
            removed = set()
            for key in deletes:
                if key in data:
                    del data[key]
                    removed.add(key)
                    self._garbage += 1
            keys = old.keys
            if fresh:
                # timsort merges the already-sorted run with the new keys cheaply
                keys = sorted(keys + fresh)
            if removed:
                keys = [k for k in keys if k not in removed]
            self._view = KVView(keys, data)

    def garbage_ratio(self) -> float:
        live = len(self._view.keys)
        return self._garbage / max(1, live + self._garbage)

    def compact(self) -> None:
        """Rewrite the log with live records only."""
        if self.directory is None:
            return
        with self._write_lock:
            path = self.directory / LOG_NAME
            tmp = path.with_suffix(".compact")
            with open(tmp, "wb") as fh:
                for key, value in self._view.items():
                    fh.write(_frame(key, value))
                fh.flush()
                os.fsync(fh.fileno())
            self._fh.close()
            os.replace(tmp, path)
            self._fh = open(path, "ab")
            self._garbage = 0

    @property
    def closed(self) -> bool:
        return self._closed

    def close(self) -> None:
        with self._write_lock:
            self._closed = True
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
