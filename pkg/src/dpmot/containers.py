"""Binary array bundle used for latent stores and sample batches.

Layout (little-endian): ``b"DPMB"``, version u32, metadata length u32,
metadata as canonical UTF-8 JSON, rows u64, cols u32, then rows x cols
float64 values in C order.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"DPMB"
VERSION = 1


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def write_array(path, array, meta):
    arr = np.ascontiguousarray(array, dtype="<f8")
    if arr.ndim != 2:
        raise InputError("bundles hold 2-d arrays")
    blob = canonical_json(meta)
    Path(path).write_bytes(b"".join([
        MAGIC,
        struct.pack("<II", VERSION, len(blob)),
        blob,
        struct.pack("<QI", arr.shape[0], arr.shape[1]),
        arr.tobytes(),
    ]))


def read_array(path):
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise InputError(f"{path}: not a DPMB bundle")
    version, mlen = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise InputError(f"{path}: unsupported bundle version {version}")
    off = 12
    meta = json.loads(buf[off:off + mlen].decode())
    off += mlen
    rows, cols = struct.unpack_from("<QI", buf, off)
    off += 12
    arr = np.frombuffer(buf, "<f8", rows * cols, off).reshape(rows, cols).copy()
    return arr, meta
