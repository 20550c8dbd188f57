"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    b"ACMVCKPT"  u32 version  u32 meta_len  meta (UTF-8 JSON)  u32 count
    count x [ u16 name_len  name  u8 ndim  ndim x u32 dim  prod(dims) x f64 ]
"""

from __future__ import annotations

import json
import struct

import numpy as np

from acmv.errors import ParseError, ShapeError

MAGIC = b"ACMVCKPT"
FORMAT_VERSION = 1


def save_checkpoint(path, params, meta=None):
    """Write ``params`` (name -> array) and a JSON-able ``meta`` dict."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(params)))
        for name, value in params.items():
            arr = np.asarray(value, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path):
    """Return ``(params, meta)`` where params maps names to float64 arrays."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ParseError("not a checkpoint file (bad magic)", path=path)
    try:
        return _parse(data, path)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"truncated or corrupt checkpoint ({exc})", path=path) from None


def _parse(data, path):
    pos = 8
    version, meta_len = struct.unpack_from("<II", data, pos)
    pos += 8
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", path=path)
    meta = json.loads(data[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
        params[name] = arr.astype(np.float64)
    if pos != len(data):
        raise ParseError("trailing bytes after last parameter", path=path)
    return params, meta


def assign_params(module_params, values):
    """Copy arrays from ``values`` into matching Params by name."""
    by_name = {p.name: p for p in module_params}
    missing = set(by_name) - set(values)
    if missing:
        raise ShapeError(f"checkpoint lacks parameters: {sorted(missing)}")
    for name, p in by_name.items():
        v = values[name]
        if v.shape != p.value.shape:
            raise ShapeError(f"{name}: checkpoint shape {v.shape} != model shape {p.value.shape}")
        p.value[...] = v
