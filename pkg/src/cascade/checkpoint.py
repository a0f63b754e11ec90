"""Binary named-tensor checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"CSCD"
    version u32      currently 1
    count   u32      number of tensors
    tensor  repeated, sorted by name so identical contents give identical bytes:
        name_len u32, name UTF-8 bytes
        rank     u32
        dims     rank * u64
        payload  prod(dims) * f32, row-major

String data (entity ids, hashes, vocabulary dumps) rides along as a pair of
tensors per field: ``<name>.utf8`` holding byte values and ``<name>.offsets``
holding item boundaries. f32 represents integers < 2**24 exactly, so the
round trip is lossless.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"CSCD"
VERSION = 1


def save(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write tensors (cast to f32) to ``path``; names must be unique."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
            fh.write(arr.tobytes())


def load(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint, returning float32 arrays keyed by tensor name."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}Q", data, offset) if rank else ()
        offset += 8 * rank
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(dims)
        offset += 4 * size
        tensors[name] = arr.copy()
    if offset != len(data):
        raise ParseError(f"{path}: {len(data) - offset} trailing bytes after last tensor")
    return tensors


def pack_strings(tensors: dict[str, np.ndarray], name: str, items: list[str]) -> None:
    """Encode a list of strings into ``<name>.utf8`` / ``<name>.offsets``."""
    blob = b"".join(s.encode("utf-8") for s in items)
    offsets = np.zeros(len(items) + 1, dtype=np.float32)
    pos = 0
    for i, s in enumerate(items):
        pos += len(s.encode("utf-8"))
        offsets[i + 1] = pos
    if pos >= 2 ** 24:
        raise ParseError(f"string table '{name}' too large for exact f32 offsets")
    tensors[f"{name}.utf8"] = np.frombuffer(blob, dtype=np.uint8).astype(np.float32)
    tensors[f"{name}.offsets"] = offsets


def unpack_strings(tensors: dict[str, np.ndarray], name: str) -> list[str]:
    blob = tensors[f"{name}.utf8"].astype(np.uint8).tobytes()
    offsets = tensors[f"{name}.offsets"].astype(np.int64)
    return [blob[offsets[i]:offsets[i + 1]].decode("utf-8") for i in range(len(offsets) - 1)]
