"""Checkpoint container: round trips and corruption detection."""

import struct

import numpy as np
import pytest

from palmspin.checkpoint import VERSION, load_checkpoint, save_checkpoint
from palmspin.errors import (
    ChecksumMismatchError,
    NotACheckpointError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)


def _sample(tmp_path):
    path = tmp_path / "ck.bin"
    config = {"lr": 5e-3, "widths": [512, 256, 128], "tag": "unit"}
    tensors = {
        "w": np.random.default_rng(0).standard_normal((7, 5)).astype(np.float32),
        "steps": np.arange(11, dtype=np.int64),
        "scalar": np.float64(3.25),
    }
    save_checkpoint(path, config, tensors)
    return path, config, tensors


def test_round_trip_bitwise(tmp_path):
    path, config, tensors = _sample(tmp_path)
    cfg, loaded = load_checkpoint(path)
    assert cfg == config
    assert set(loaded) == set(tensors)
    for name, arr in tensors.items():
        got = loaded[name]
        assert got.dtype == np.asarray(arr).dtype
        assert got.shape == np.asarray(arr).shape
        assert np.asarray(arr).tobytes() == got.tobytes()


def test_flipped_payload_byte_fails_checksum(tmp_path):
    path, _, _ = _sample(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumMismatchError):
        load_checkpoint(path)


def test_truncated_file_structured_error(tmp_path):
    path, _, _ = _sample(tmp_path)
    raw = path.read_bytes()
    for cut in (6, 17, len(raw) // 2, len(raw) - 5):
        path.write_bytes(raw[:cut])
        with pytest.raises((TruncatedCheckpointError, ChecksumMismatchError)):
            load_checkpoint(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(NotACheckpointError):
        load_checkpoint(path)


def test_future_version_rejected(tmp_path):
    path, _, _ = _sample(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", VERSION + 1)
    import zlib

    body = bytes(raw[:-4])
    raw[-4:] = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        load_checkpoint(path)


def test_empty_tensor_table(tmp_path):
    path = tmp_path / "empty.bin"
    save_checkpoint(path, {}, {})
    cfg, tensors = load_checkpoint(path)
    assert cfg == {} and tensors == {}
