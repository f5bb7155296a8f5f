"""Versioned binary container for named weight/bias tensors.

Layout: 4-byte magic, u16 version, u32 record count, then per record a
u16 name length, UTF-8 name, u8 rank, u32 dims, and little-endian f64
data. The super-resolution generator uses magic ``CCSR`` and the
classifier ``CCCL`` so the two model kinds cannot be confused on load.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC_SR = b"CCSR"
MAGIC_CLASSIFIER = b"CCCL"
FORMAT_VERSION = 1


class ParamsFormatError(ValueError):
    """Raised for bad magic, version, truncation, or shape mismatches."""


def save_params(path, params: dict, magic: bytes):
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    chunks = [magic, struct.pack("<HI", FORMAT_VERSION, len(params))]
    for name, value in params.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path, magic: bytes) -> dict:
    data = Path(path).read_bytes()
    if data[:4] != magic:
        raise ParamsFormatError(
            f"{path}: magic {data[:4]!r} does not match expected {magic!r}"
        )
    version, count = struct.unpack_from("<HI", data, 4)
    if version != FORMAT_VERSION:
        raise ParamsFormatError(f"{path}: unsupported format version {version}")
    pos = 10
    params = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            end = pos + 8 * n
            if end > len(data):
                raise ParamsFormatError(f"{path}: truncated data for '{name}'")
            params[name] = np.frombuffer(data[pos:end], dtype="<f8").reshape(shape).copy()
            pos = end
    except struct.error as exc:
        raise ParamsFormatError(f"{path}: truncated record header") from exc
    return params


def validate_shapes(params: dict, expected: dict, what: str):
    """Check loaded params against a config-derived shape template."""
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ParamsFormatError(
            f"{what}: parameter names do not match config "
            f"(missing {missing or 'none'}, unexpected {extra or 'none'})"
        )
    for name, shape in expected.items():
        got = tuple(params[name].shape)
        if got != tuple(shape):
            raise ParamsFormatError(f"{what}: '{name}' has shape {got}, config expects {tuple(shape)}")
