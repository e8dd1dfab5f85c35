"""Byte-deterministic parameter files.

Layout: an 8-byte magic, a little-endian u32 header length, a UTF-8 JSON
header (sorted keys) describing each array, then the raw little-endian
float64 payloads in header order.  Unlike ``.npz`` nothing time-dependent
is written, so identical models produce identical bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MLPFPRM1"


def save_arrays(path, meta: dict, arrays: dict) -> None:
    names = list(arrays)
    specs = []
    blobs = []
    for name in names:
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        specs.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = json.dumps({"meta": meta, "arrays": specs}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_arrays(path):
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a parameter file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    pos = 12 + hlen
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(raw):
        raise ValueError(f"{path}: trailing or truncated payload")
    return header["meta"], arrays
