"""Flat binary checkpoint format (magic MLV1, little-endian throughout).

Layout: magic "MLV1", u32 format version, u32 entry count, then per entry
u32 name length + UTF-8 name, u32 dtype code (0 = float32, 1 = float64),
u32 rank, u64 per dimension, raw row-major payload.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MLV1"
VERSION = 1

_CODE_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPE_OF = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save(path, arrays, version=VERSION):
    """Write name->array mappings; a ParamStore works directly."""
    if hasattr(arrays, "names"):
        arrays = {name: arrays[name].data for name in arrays.names()}
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", version, len(arrays)))
        for name, a in arrays.items():
            a = np.asarray(a)
            code = _CODE_OF.get(a.dtype.newbyteorder("="))
            if code is None:
                raise ValueError(f"checkpoint entry {name!r}: unsupported dtype {a.dtype}")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<II", code, a.ndim))
            f.write(struct.pack(f"<{a.ndim}Q", *a.shape) if a.ndim else b"")
            f.write(np.ascontiguousarray(a, dtype=_DTYPE_OF[code]).tobytes())


def _take(buf, offset, n, path):
    if offset + n > len(buf):
        raise ValueError(f"{path}: truncated checkpoint")
    return buf[offset : offset + n], offset + n


def load(path):
    """Read a checkpoint back as an ordered dict of native-order arrays."""
    with open(path, "rb") as f:
        buf = f.read()
    raw, off = _take(buf, 0, 4, path)
    if raw != MAGIC:
        raise ValueError(f"{path}: not an MLV1 checkpoint")
    raw, off = _take(buf, off, 8, path)
    version, count = struct.unpack("<II", raw)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    out = {}
    for _ in range(count):
        raw, off = _take(buf, off, 4, path)
        (nlen,) = struct.unpack("<I", raw)
        raw, off = _take(buf, off, nlen, path)
        name = raw.decode("utf-8")
        raw, off = _take(buf, off, 8, path)
        code, rank = struct.unpack("<II", raw)
        if code not in _DTYPE_OF:
            raise ValueError(f"{path}: entry {name!r} has unknown dtype code {code}")
        raw, off = _take(buf, off, 8 * rank, path)
        shape = struct.unpack(f"<{rank}Q", raw) if rank else ()
        dt = _DTYPE_OF[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize if rank else dt.itemsize
        raw, off = _take(buf, off, nbytes, path)
        a = np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="), copy=True)
        out[name] = a
    if off != len(buf):
        raise ValueError(f"{path}: trailing bytes after last entry")
    return out


def load_into(store, path):
    store.load_values(load(path))
