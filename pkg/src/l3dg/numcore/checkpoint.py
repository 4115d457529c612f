"""Binary tensor checkpoints.

Layout, little-endian throughout: magic ``L3DGTNSR``, version u32, then one
record per tensor until EOF: name length (u32), UTF-8 name, rank (u32),
extents (u64 each), dtype tag (u8: 0=f32, 1=f64), raw values.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"L3DGTNSR"
VERSION = 1

_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAG_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            if arr.dtype not in _TAG_FOR:
                raise TypeError(f"unsupported dtype for {name}: {arr.dtype}")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(struct.pack("<B", _TAG_FOR[arr.dtype]))
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    path = Path(path)
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a tensor checkpoint (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(rank))
            (tag,) = struct.unpack("<B", fh.read(1))
            if tag not in _DTYPE_TAGS:
                raise ValueError(f"{path}: unknown dtype tag {tag} for {name}")
            dtype = _DTYPE_TAGS[tag]
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ValueError(f"{path}: truncated data for {name}")
            out[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return out
