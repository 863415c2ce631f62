"""Tagged, length-prefixed binary encoding for property values and payloads.

Layout of an encoded payload::

    0x01 (format version) | value

    value := 'N' | 'T' | 'F'
           | 'I' int64-be | 'D' float64-be
           | 'S' u32-be len, utf-8 bytes
           | 'L' u32-be count, value*
           | 'M' u32-be count, (u32-be len, utf-8 key, value)*

Maps are written with keys in sorted order so equal payloads encode to equal
bytes.
"""

from __future__ import annotations

import struct

from .errors import CorruptRecord

FORMAT_VERSION = 1

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")


def check_property_value(value):
    """Raise TypeError/ValueError unless ``value`` is a legal property value."""
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise ValueError(f"integer {value} does not fit in int64")
        return value
    if isinstance(value, float):
        return value
    raise TypeError(f"unsupported property value type {type(value).__name__}")


def check_property_map(props) -> dict:
    out = {}
    for key, value in dict(props or {}).items():
        if not isinstance(key, str) or not key:
            raise ValueError("property names must be nonempty strings")
        out[key] = check_property_value(value)
    return out


def _write(value, out: bytearray) -> None:
    if value is None:
        out += b"N"
    elif value is True:
        out += b"T"
    elif value is False:
        out += b"F"
    elif isinstance(value, int):
        out += b"I"
        out += _I64.pack(value)
    elif isinstance(value, float):
        out += b"D"
        out += _F64.pack(value)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"S"
        out += _U32.pack(len(raw))
        out += raw
    elif isinstance(value, (list, tuple)):
        out += b"L"
        out += _U32.pack(len(value))
        for item in value:
            _write(item, out)
    elif isinstance(value, dict):
        out += b"M"
        out += _U32.pack(len(value))
        for key in sorted(value):
            raw = key.encode("utf-8")
            out += _U32.pack(len(raw))
            out += raw
            _write(value[key], out)
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")


def encode(value) -> bytes:
    out = bytearray([FORMAT_VERSION])
    _write(value, out)
    return bytes(out)


def _read(buf: bytes, pos: int):
    try:
        tag = buf[pos]
    except IndexError:
        raise CorruptRecord("truncated payload") from None
    pos += 1
    if tag == 0x4E:  # N
        return None, pos
    if tag == 0x54:  # T
        return True, pos
    if tag == 0x46:  # F
        return False, pos
    try:
        if tag == 0x49:  # I
            return _I64.unpack_from(buf, pos)[0], pos + 8
        if tag == 0x44:  # D
            return _F64.unpack_from(buf, pos)[0], pos + 8
        if tag == 0x53:  # S
            (n,) = _U32.unpack_from(buf, pos)
            pos += 4
            if pos + n > len(buf):
                raise CorruptRecord("truncated string")
            return buf[pos:pos + n].decode("utf-8"), pos + n
        if tag == 0x4C:  # L
            (n,) = _U32.unpack_from(buf, pos)
            pos += 4
            items = []
            for _ in range(n):
                item, pos = _read(buf, pos)
                items.append(item)
            return items, pos
        if tag == 0x4D:  # M
            (n,) = _U32.unpack_from(buf, pos)
            pos += 4
            result = {}
            for _ in range(n):
                (klen,) = _U32.unpack_from(buf, pos)
                pos += 4
                key = buf[pos:pos + klen].decode("utf-8")
                pos += klen
                result[key], pos = _read(buf, pos)
            return result, pos
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptRecord(f"bad payload: {exc}") from None
    raise CorruptRecord(f"unknown tag 0x{tag:02x}")


def decode(buf: bytes):
    if not buf or buf[0] != FORMAT_VERSION:
        raise CorruptRecord("unsupported payload format version")
    value, pos = _read(buf, 1)
    if pos != len(buf):
        raise CorruptRecord("trailing bytes after payload")
    return value
