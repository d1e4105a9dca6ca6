"""Binary array container with a JSON sidecar.

Layout (all integers little-endian)::

    magic      4 bytes  b"CSIF"
    version    u16      1
    n_arrays   u16
    per array:
        name_len   u16, then name as UTF-8
        dtype      u8   (see DTYPE_CODES)
        ndim       u8
        dims       u64 * ndim
        payload    row-major, little-endian

Complex data is written as complex64 unless the caller passes an array of
another supported dtype. Metadata (scenario, seeds, fingerprints) goes in
``<path>.json`` next to the binary file.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ModelMismatchError

MAGIC = b"CSIF"
VERSION = 1

DTYPE_CODES = {
    np.dtype("<c8"): 1,
    np.dtype("<c16"): 2,
    np.dtype("<f4"): 3,
    np.dtype("<f8"): 4,
    np.dtype("<u4"): 5,
    np.dtype("<i8"): 6,
    np.dtype("u1"): 7,
}
_CODE_DTYPES = {code: dt for dt, code in DTYPE_CODES.items()}


def fingerprint(data: bytes) -> str:
    """64-bit hex digest used to tie artifacts together."""
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def encode_arrays(arrays: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HH", VERSION, len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in "|" else arr.dtype
        if dt not in DTYPE_CODES:
            raise TypeError(f"unsupported dtype {arr.dtype} for array {name!r}")
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BB", DTYPE_CODES[dt], arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return buf.getvalue()


def decode_arrays(data: bytes) -> dict[str, np.ndarray]:
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise ValueError("not a CSIF container (bad magic)")
    version, n_arrays = struct.unpack_from("<HH", view, 4)
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    pos = 8
    out = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack_from("<H", view, pos)
        pos += 2
        name = bytes(view[pos:pos + name_len]).decode()
        pos += name_len
        code, ndim = struct.unpack_from("<BB", view, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}Q", view, pos)
        pos += 8 * ndim
        dt = _CODE_DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dt.itemsize
        if pos + nbytes > len(data):
            raise ValueError(f"truncated payload for array {name!r}")
        out[name] = np.frombuffer(view[pos:pos + nbytes], dtype=dt).reshape(shape).copy()
        pos += nbytes
    if pos != len(data):
        raise ValueError("trailing bytes after last array")
    return out


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> str:
    """Write the container and its sidecar; return the content fingerprint."""
    path = Path(path)
    data = encode_arrays(arrays)
    path.write_bytes(data)
    fp = fingerprint(data)
    meta = dict(meta or {})
    meta["fingerprint"] = fp
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return fp


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    data = path.read_bytes()
    arrays = decode_arrays(data)
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    fp = fingerprint(data)
    if meta.get("fingerprint", fp) != fp:
        raise ModelMismatchError(f"{path}: sidecar fingerprint does not match payload")
    meta["fingerprint"] = fp
    return arrays, meta
