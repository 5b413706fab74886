"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic        8 bytes   b"S2STRNNT"
    version      uint32    FORMAT_VERSION
    meta_len     uint32
    meta         meta_len bytes of UTF-8 JSON (config echo + model shape info)
    n_arrays     uint32
    per array, in PARAM_NAMES order:
        name_len uint16, name bytes (ASCII)
        ndim     uint8,  dims uint32 * ndim
        data     float64 little-endian, C order
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .toymodel import PARAM_NAMES, ModelParams

MAGIC = b"S2STRNNT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params: ModelParams, meta: dict) -> bytes:
    buf = io.BytesIO()
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(PARAM_NAMES)))
    for name in PARAM_NAMES:
        arr = np.ascontiguousarray(getattr(params, name), dtype="<f8")
        raw = name.encode("ascii")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def _read(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise CheckpointError("checkpoint truncated")
    return data


def loads(data: bytes) -> tuple[ModelParams, dict]:
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic header: not a checkpoint file")
    version, meta_len = struct.unpack("<II", _read(buf, 8))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(_read(buf, meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from exc
    (n_arrays,) = struct.unpack("<I", _read(buf, 4))
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<H", _read(buf, 2))
        name = _read(buf, name_len).decode("ascii", errors="replace")
        (ndim,) = struct.unpack("<B", _read(buf, 1))
        shape = struct.unpack(f"<{ndim}I", _read(buf, 4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(_read(buf, 8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if buf.read(1):
        raise CheckpointError("trailing bytes after checkpoint payload")
    if set(arrays) != set(PARAM_NAMES):
        raise CheckpointError(f"checkpoint arrays {sorted(arrays)} do not match the model")
    params = ModelParams(**{k: arrays[k] for k in PARAM_NAMES})
    try:
        params.check()
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
    return params, meta


def save(path, params: ModelParams, meta: dict) -> None:
    Path(path).write_bytes(dumps(params, meta))


def load(path) -> tuple[ModelParams, dict]:
    return loads(Path(path).read_bytes())
