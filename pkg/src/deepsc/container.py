"""Single-file binary container used for checkpoints and corpus caches.

Layout (all integers little-endian)::

    magic        4 bytes   b"DSCK" (checkpoint) or b"DSCC" (corpus)
    version      u16       FORMAT_VERSION
    n_entries    u32
    entry * n_entries:
        name_len u16, name (UTF-8)
        kind     u8        0 = UTF-8 text, 1 = float64 array, 2 = int64 array
        ndim     u8, dims u32 * ndim
        nbytes   u64, payload (C order, little-endian)

Entries keep insertion order, so equal contents give equal bytes.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError

FORMAT_VERSION = 1
MAGIC_CHECKPOINT = b"DSCK"
MAGIC_CORPUS = b"DSCC"

_TEXT, _F64, _I64 = 0, 1, 2


def encode(magic: bytes, entries) -> bytes:
    parts = [magic, struct.pack("<HI", FORMAT_VERSION, len(entries))]
    for name, value in entries:
        raw_name = name.encode("utf-8")
        if isinstance(value, str):
            kind, dims, payload = _TEXT, (), value.encode("utf-8")
        else:
            arr = np.asarray(value)
            if arr.dtype.kind == "f":
                kind, payload = _F64, np.ascontiguousarray(arr, dtype="<f8").tobytes()
            elif arr.dtype.kind in "iub":
                kind, payload = _I64, np.ascontiguousarray(arr, dtype="<i8").tobytes()
            else:
                raise CheckpointError(f"entry {name!r}: unsupported dtype {arr.dtype}")
            dims = arr.shape
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<BB", kind, len(dims)) + struct.pack(f"<{len(dims)}I", *dims))
        parts.append(struct.pack("<Q", len(payload)) + payload)
    return b"".join(parts)


def decode(data: bytes, magic: bytes, path="<bytes>") -> dict:
    try:
        if data[:4] != magic:
            raise CheckpointError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
        version, n = struct.unpack_from("<HI", data, 4)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        pos = 10
        out = {}
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + ln].decode("utf-8")
            pos += ln
            kind, ndim = struct.unpack_from("<BB", data, pos)
            pos += 2
            dims = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            (nbytes,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            payload = data[pos:pos + nbytes]
            if len(payload) != nbytes:
                raise CheckpointError(f"{path}: truncated entry {name!r}")
            pos += nbytes
            if kind == _TEXT:
                out[name] = payload.decode("utf-8")
            elif kind in (_F64, _I64):
                dtype = "<f8" if kind == _F64 else "<i8"
                out[name] = np.frombuffer(payload, dtype=dtype).astype(dtype[1:]).reshape(dims)
            else:
                raise CheckpointError(f"{path}: entry {name!r} has unknown kind {kind}")
        if pos != len(data):
            raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
        return out
    except (struct.error, UnicodeDecodeError, ValueError) as err:
        if isinstance(err, CheckpointError):
            raise
        raise CheckpointError(f"{path}: malformed container ({err})") from err


def write_atomic(path, data: bytes):
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read(path, magic):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise CheckpointError(f"cannot read {path}: {err}") from err
    return decode(data, magic, path)
