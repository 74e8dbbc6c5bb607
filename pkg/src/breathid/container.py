"""BRTH model container: named little-endian float64 arrays in one file.

Layout::

    b"BRTH" | version:u32 | n_records:u32
    per record:
        name_len:u32 | name:utf-8 | dtype:u32 | rank:u32 | dims:u64*rank | values

All integers are little-endian; values are row-major float64.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"BRTH"
VERSION = 1
DTYPE_F64 = 0


class ContainerError(ValueError):
    pass


def write_container(path, records: dict) -> None:
    """Write records in insertion order. Names must be unique (dict keys)."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, value in records.items():
        arr = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<II", DTYPE_F64, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError(f"{self.path}: truncated container at byte {self.pos}")
        out = self.data[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path) -> dict:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing artifact: {path}")
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(4) != MAGIC:
        raise ContainerError(f"{path}: not a BRTH container")
    version, count = r.unpack("<II")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    records = {}
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ContainerError(f"{path}: record name is not UTF-8") from exc
        dtype, rank = r.unpack("<II")
        if dtype != DTYPE_F64:
            raise ContainerError(f"{path}: record {name!r} has unknown dtype code {dtype}")
        dims = r.unpack(f"<{rank}Q") if rank else ()
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(8 * n_values)
        if name in records:
            raise ContainerError(f"{path}: duplicate record name {name!r}")
        records[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    if r.pos != len(r.data):
        raise ContainerError(f"{path}: {len(r.data) - r.pos} trailing bytes after last record")
    return records
