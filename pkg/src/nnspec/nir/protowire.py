"""Minimal protobuf wire-format codec (the subset ONNX model files need).

Only three wire types occur in ONNX graphs we read or write: varint (0),
64-bit (1), and length-delimited (2); 32-bit (5) appears in packed float
lists.  Signed int64 fields use plain two's-complement varints.
"""

from __future__ import annotations

import struct

VARINT = 0
FIXED64 = 1
LENGTH = 2
FIXED32 = 5


def encode_varint(value: int) -> bytes:
    if value < 0:
        value &= (1 << 64) - 1
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise ValueError("truncated varint")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            break
        shift += 7
        if shift > 70:
            raise ValueError("varint too long")
    return result, pos


def to_signed64(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def tag(field: int, wire_type: int) -> bytes:
    return encode_varint((field << 3) | wire_type)


def field_varint(field: int, value: int) -> bytes:
    return tag(field, VARINT) + encode_varint(value)


def field_bytes(field: int, value: bytes) -> bytes:
    return tag(field, LENGTH) + encode_varint(len(value)) + value


def field_string(field: int, value: str) -> bytes:
    return field_bytes(field, value.encode("utf-8"))


def field_double(field: int, value: float) -> bytes:
    return tag(field, FIXED64) + struct.pack("<d", value)


def iter_fields(data: bytes):
    """Yield (field_number, wire_type, value) triples over a message body.

    Length-delimited values come back as bytes, varints as ints, fixed64
    and fixed32 as raw bytes for the caller to unpack.
    """
    pos = 0
    while pos < len(data):
        key, pos = decode_varint(data, pos)
        field = key >> 3
        wire = key & 0x07
        if wire == VARINT:
            value, pos = decode_varint(data, pos)
        elif wire == FIXED64:
            value = data[pos:pos + 8]
            if len(value) != 8:
                raise ValueError("truncated fixed64")
            pos += 8
        elif wire == LENGTH:
            length, pos = decode_varint(data, pos)
            value = data[pos:pos + length]
            if len(value) != length:
                raise ValueError("truncated length-delimited field")
            pos += length
        elif wire == FIXED32:
            value = data[pos:pos + 4]
            if len(value) != 4:
                raise ValueError("truncated fixed32")
            pos += 4
        else:
            raise ValueError(f"unsupported wire type {wire}")
        yield field, wire, value


def decode_packed_varints(data: bytes) -> list[int]:
    out = []
    pos = 0
    while pos < len(data):
        value, pos = decode_varint(data, pos)
        out.append(value)
    return out
