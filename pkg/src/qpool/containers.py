"""Little-endian matrix containers.

SPEC1::

    b"SPEC"  u8 version=1  u32 rows  u32 cols
    f64[rows*cols] row-major
    u32 n  utf-8 JSON metadata[n]

QREF1::

    b"QREF"  u8 version=1  f64 z  u32 training_count  u32 rows  u32 cols
    f64[rows*cols] row-major
    u32 n  utf-8 JSON metadata[n]

Values are copied byte-for-byte, so NaN payloads, signed zeros and subnormals
survive a round trip.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

SPEC_MAGIC = b"SPEC"
QREF_MAGIC = b"QREF"
VERSION = 1

_SPEC_HEADER = struct.Struct("<4sBII")
_QREF_HEADER = struct.Struct("<4sBdIII")
_U32 = struct.Struct("<I")


def _matrix_bytes(values) -> tuple[int, int, bytes]:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    rows, cols = arr.shape
    return rows, cols, np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _meta_bytes(metadata: dict) -> bytes:
    blob = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _U32.pack(len(blob)) + blob


def _read_tail(data: bytes, offset: int, rows: int, cols: int, what: str):
    n_bytes = rows * cols * 8
    if len(data) < offset + n_bytes + _U32.size:
        raise FormatError(
            f"{what}: truncated, header declares {rows}x{cols} values "
            f"but file has {len(data)} bytes"
        )
    values = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
    values = values.astype(np.float64).reshape(rows, cols)
    offset += n_bytes
    (n_meta,) = _U32.unpack_from(data, offset)
    offset += _U32.size
    if len(data) != offset + n_meta:
        raise FormatError(
            f"{what}: metadata length {n_meta} does not match the "
            f"{len(data) - offset} remaining bytes"
        )
    try:
        metadata = json.loads(data[offset:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{what}: metadata is not valid UTF-8 JSON ({exc})") from exc
    if not isinstance(metadata, dict):
        raise FormatError(f"{what}: metadata must be a JSON object")
    return values, metadata


def _check_magic(data: bytes, magic: bytes, header: struct.Struct, what: str):
    if len(data) < 4 or data[:4] != magic:
        raise FormatError(f"{what}: bad magic {data[:4]!r}, expected {magic!r}")
    if len(data) < header.size:
        raise FormatError(f"{what}: truncated header")
    fields = header.unpack_from(data, 0)
    if fields[1] != VERSION:
        raise FormatError(f"{what}: unsupported version {fields[1]}")
    return fields


def pack_spec1(values, metadata: dict) -> bytes:
    rows, cols, payload = _matrix_bytes(values)
    return _SPEC_HEADER.pack(SPEC_MAGIC, VERSION, rows, cols) + payload + _meta_bytes(metadata)


def unpack_spec1(data: bytes, what: str = "SPEC1") -> tuple[np.ndarray, dict]:
    _, _, rows, cols = _check_magic(data, SPEC_MAGIC, _SPEC_HEADER, what)
    return _read_tail(data, _SPEC_HEADER.size, rows, cols, what)


def pack_qref1(values, z: float, training_count: int, metadata: dict) -> bytes:
    rows, cols, payload = _matrix_bytes(values)
    head = _QREF_HEADER.pack(QREF_MAGIC, VERSION, float(z), int(training_count), rows, cols)
    return head + payload + _meta_bytes(metadata)


def unpack_qref1(data: bytes, what: str = "QREF1"):
    """Return ``(values, z, training_count, metadata)``."""
    _, _, z, count, rows, cols = _check_magic(data, QREF_MAGIC, _QREF_HEADER, what)
    values, metadata = _read_tail(data, _QREF_HEADER.size, rows, cols, what)
    return values, z, count, metadata


def write_spec1(path, values, metadata: dict) -> None:
    Path(path).write_bytes(pack_spec1(values, metadata))


def read_spec1(path) -> tuple[np.ndarray, dict]:
    return unpack_spec1(Path(path).read_bytes(), what=str(path))
