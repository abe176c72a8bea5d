"""Single-file checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"PSPN"
    version u32
    config  u64 length + UTF-8 JSON document
    count   u32 number of tensors
    per tensor:
        name  u32 length + UTF-8
        dtype u32 length + UTF-8 numpy dtype string, little-endian form
        ndim  u32, then ndim x u64 shape
        data  C-order bytes
    crc32   u32 over everything before it

Round-trips are bitwise: loading returns arrays with the exact dtype and
shape that were saved.
"""

import json
import struct
import zlib

import numpy as np

from .errors import (
    CheckpointError,
    ChecksumMismatchError,
    NotACheckpointError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)

MAGIC = b"PSPN"
VERSION = 1


def _le_dtype(dtype):
    dt = np.dtype(dtype)
    if dt.byteorder == ">":
        dt = dt.newbyteorder("<")
    return dt


def save_checkpoint(path, config, tensors):
    """Write a config dict and named arrays to *path*.

    config must be JSON-serializable; tensors is a mapping name -> ndarray.
    """
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    blob += struct.pack("<Q", len(cfg))
    blob += cfg
    blob += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dt = _le_dtype(arr.dtype)
        # tobytes() yields C-order bytes for any layout; ascontiguousarray
        # would promote 0-d arrays to shape (1,) and corrupt the shape record
        arr = arr.astype(dt, copy=False)
        nb = name.encode("utf-8")
        db = dt.str.encode("utf-8")
        blob += struct.pack("<I", len(nb)) + nb
        blob += struct.pack("<I", len(db)) + db
        blob += struct.pack("<I", arr.ndim)
        for s in arr.shape:
            blob += struct.pack("<Q", s)
        blob += arr.tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def string(self):
        return self.take(self.u32()).decode("utf-8")


def load_checkpoint(path):
    """Read back (config, tensors) written by save_checkpoint."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise NotACheckpointError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 8:
        raise TruncatedCheckpointError(f"{path}: no room for header")
    stored = struct.unpack("<I", data[-4:])[0]
    actual = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumMismatchError(
            f"{path}: stored crc {stored:#010x} != computed {actual:#010x}"
        )
    rd = _Reader(data[:-4])
    rd.take(4)
    version = rd.u32()
    if version > VERSION:
        raise UnsupportedVersionError(f"{path}: version {version} > supported {VERSION}")
    cfg_len = rd.u64()
    try:
        config = json.loads(rd.take(cfg_len).decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: config block is not valid JSON: {exc}") from exc
    count = rd.u32()
    tensors = {}
    for _ in range(count):
        name = rd.string()
        dtype = np.dtype(rd.string())
        ndim = rd.u32()
        shape = tuple(rd.u64() for _ in range(ndim))
        nbytes = int(dtype.itemsize * int(np.prod(shape, dtype=np.int64)))
        buf = rd.take(nbytes)
        tensors[name] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return config, tensors
