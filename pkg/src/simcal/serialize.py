"""Self-describing binary container for trained-model arrays.

Layout: magic, format version, a JSON header (config echo plus an array
index with names, dtypes, shapes, offsets), then raw little-endian array
bytes. Loading restores every array bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["save_blob", "load_blob"]

_MAGIC = b"SCBL"
_VERSION = 1


def save_blob(path, arrays: dict, config: dict) -> None:
    """Write named float arrays plus a JSON-serializable config echo."""
    entries = []
    payload = bytearray()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        entries.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": len(payload),
            "nbytes": arr.nbytes,
        })
        payload.extend(arr.tobytes())
    header = json.dumps({"version": _VERSION, "config": config, "arrays": entries},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(header)))
        fh.write(header)
        fh.write(payload)


def load_blob(path):
    """Read a container; returns (arrays dict, config dict)."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a simcal blob (bad magic {raw[:4]!r})")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported blob version {version}")
    header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    base = 12 + header_len
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        buf = raw[start:start + entry["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, header["config"]
