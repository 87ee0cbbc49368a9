"""Binary container for named float64 tensors.

Layout (all integers little-endian u32)::

    b"HGTC" version count
    count x { name_len name_utf8 ndim dims[ndim] data[prod(dims)] as <f8 }
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"HGTC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"truncated checkpoint: need {n} bytes for {what} at offset {pos}, have {len(blob) - pos}")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic at offset 0")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        try:
            name = take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"record name is not UTF-8 near offset {pos}") from None
        if name in out:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        (ndim,) = struct.unpack("<I", take(4, "rank"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, "shape"))
        n = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(take(8 * n, f"data of {name!r}"), dtype="<f8").reshape(shape)
        out[name] = data.astype(np.float64)
    if pos != len(blob):
        raise CheckpointError(f"trailing bytes after last record at offset {pos}")
    return out


def checkpoint_save(tensors: dict[str, np.ndarray], path) -> None:
    blob = dumps(tensors)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def checkpoint_load(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return loads(fh.read())
