"""GTF1 tensor container: named dense float tensors in one binary file.

Layout (all integers little-endian, offsets absolute from file start):

    bytes 0..3   magic ``GTF1``
    u32          entry count
    per entry:
        u32      name length in bytes
        bytes    UTF-8 name
        u8       dtype code (0 = float32, 1 = float64)
        u8       rank (1..8)
        u64 * r  extents, all positive
        u64      payload offset
    payloads     row-major, tightly packed

Readers validate the magic, the table arithmetic, and payload bounds
before touching any payload bytes.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"GTF1"
MAX_RANK = 8

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class ContainerError(Exception):
    """Base class for container format violations."""


class BadMagicError(ContainerError):
    """File does not start with the GTF1 magic."""


class TruncatedContainerError(ContainerError):
    """Declared table or payload extends past the end of the file."""


class DuplicateNameError(ContainerError):
    """Two entries share a tensor name."""


def write_container(path: str, tensors: dict[str, np.ndarray]) -> None:
    """Write tensors atomically (via a ``.partial`` sibling then rename)."""
    if not tensors:
        raise ValueError("container must hold at least one tensor")
    entries = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _CODE_FOR_DTYPE:
            raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        if arr.ndim < 1 or arr.ndim > MAX_RANK:
            raise ValueError(f"tensor {name!r} has unsupported rank {arr.ndim}")
        if arr.size == 0:
            raise ValueError(f"tensor {name!r} has a zero extent: {arr.shape}")
        entries.append((name.encode("utf-8"), _CODE_FOR_DTYPE[arr.dtype], arr))

    table_size = len(MAGIC) + 4
    for name_b, _, arr in entries:
        table_size += 4 + len(name_b) + 1 + 1 + 8 * arr.ndim + 8

    parts = [MAGIC, struct.pack("<I", len(entries))]
    offset = table_size
    payloads = []
    for name_b, code, arr in entries:
        parts.append(struct.pack("<I", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(struct.pack("<Q", offset))
        payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        payloads.append(payload)
        offset += len(payload)

    tmp = f"{path}.partial"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
        for payload in payloads:
            fh.write(payload)
    os.replace(tmp, path)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedContainerError(
                f"table needs {self.pos + n} bytes but file has {len(self.buf)}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def read_container(path: str) -> dict[str, np.ndarray]:
    """Read every tensor; raises a :class:`ContainerError` subclass on a
    malformed file, before any payload is interpreted."""
    with open(path, "rb") as fh:
        buf = fh.read()
    cur = _Cursor(buf)
    if cur.take(len(MAGIC)) != MAGIC:
        raise BadMagicError(f"{path}: bad magic, not a GTF1 container")
    count = cur.u32()
    entries = []
    names = set()
    for _ in range(count):
        name_len = cur.u32()
        name = cur.take(name_len).decode("utf-8")
        if name in names:
            raise DuplicateNameError(f"{path}: duplicate tensor name {name!r}")
        names.add(name)
        code = cur.u8()
        if code not in _DTYPE_CODES:
            raise ContainerError(f"{path}: tensor {name!r} has unknown dtype code {code}")
        rank = cur.u8()
        if not 1 <= rank <= MAX_RANK:
            raise ContainerError(f"{path}: tensor {name!r} has invalid rank {rank}")
        extents = [cur.u64() for _ in range(rank)]
        if any(e == 0 for e in extents):
            raise ContainerError(f"{path}: tensor {name!r} has a zero extent")
        offset = cur.u64()
        entries.append((name, _DTYPE_CODES[code], tuple(extents), offset))

    # Bounds and overlap checks on the whole table before reading payloads.
    table_end = cur.pos
    spans = []
    for name, dtype, extents, offset in entries:
        nbytes = dtype.itemsize * int(np.prod(extents))
        if offset < table_end:
            raise ContainerError(f"{path}: tensor {name!r} payload overlaps the table")
        if offset + nbytes > len(buf):
            raise TruncatedContainerError(
                f"{path}: tensor {name!r} payload ends at {offset + nbytes}, file has {len(buf)} bytes"
            )
        spans.append((offset, offset + nbytes, name))
    spans.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise ContainerError(f"{path}: payloads of {n0!r} and {n1!r} overlap")

    out = {}
    for name, dtype, extents, offset in entries:
        nbytes = dtype.itemsize * int(np.prod(extents))
        arr = np.frombuffer(buf, dtype=dtype, count=int(np.prod(extents)), offset=offset)
        out[name] = arr.reshape(extents).copy()
    return out


def container_summary(path: str) -> list[dict]:
    """Name/dtype/shape listing for inspection output."""
    tensors = read_container(path)
    return [
        {"name": name, "dtype": arr.dtype.name, "shape": list(arr.shape)}
        for name, arr in tensors.items()
    ]
