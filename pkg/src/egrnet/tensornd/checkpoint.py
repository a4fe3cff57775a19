"""Binary weight checkpoints.

Layout (all integers unsigned 32-bit little-endian):
  magic "EGRN" | version | tensor count
  per tensor: name length | UTF-8 name | rank | dims... | float64 LE data

Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"EGRN"
VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", a.ndim))
            f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(a.tobytes())


def _read(f, n, path, what):
    data = f.read(n)
    if len(data) != n:
        raise FormatError(
            f"{path}: truncated while reading {what} at byte offset {f.tell() - len(data)}")
    return data


def load_checkpoint(path) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        magic = _read(f, 4, path, "magic")
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version, count = struct.unpack("<II", _read(f, 8, path, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read(f, 4, path, "name length"))
            name = _read(f, name_len, path, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read(f, 4, path, "rank"))
            dims = struct.unpack(f"<{rank}I", _read(f, 4 * rank, path, "dims"))
            n = int(np.prod(dims)) if rank else 1
            data = _read(f, 8 * n, path, f"data of {name!r}")
            tensors[name] = np.frombuffer(data, dtype="<f8").reshape(dims).copy()
        trailing = f.read(1)
        if trailing:
            raise FormatError(f"{path}: trailing bytes after last tensor")
    return tensors
