"""Binary container shared by checkpoints, scenes, map snapshots and field dumps.

Layout (all integers little-endian)::

    b"ODRQ"  u16 version
    repeated until EOF:
        u32 name_len, name bytes (utf-8), u32 rank, rank x u32 extents,
        prod(extents) x float32 row-major
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ODRQ"
VERSION = 1


class ContainerError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<H", VERSION)]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise ContainerError("not an ODRQ container (bad magic)")
    if len(blob) < 6:
        raise ContainerError("truncated header")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    pos = 6
    tensors: dict[str, np.ndarray] = {}
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            if pos + 4 * count > len(blob):
                raise ContainerError(f"truncated data for tensor {name!r}")
            tensors[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape).copy()
            pos += 4 * count
    except struct.error as exc:
        raise ContainerError(f"truncated record: {exc}") from None
    return tensors


def save(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
