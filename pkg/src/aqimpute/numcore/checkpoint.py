"""Versioned flat-binary parameter checkpoints.

Layout::

    AQCK1\n
    <one line of UTF-8 JSON>\n
    <float64 little-endian payload>

The JSON header holds ``{"version": 1, "meta": {...}, "tensors": [{"name",
"shape"}, ...]}``; the payload concatenates the tensors in header order,
each flattened row-major. Identical inputs produce identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"AQCK1\n"
VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    names = list(tensors)
    header = {
        "version": VERSION,
        "meta": meta or {},
        "tensors": [{"name": k, "shape": list(np.shape(tensors[k]))} for k in names],
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for k in names:
            fh.write(np.ascontiguousarray(tensors[k], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        payload = fh.read()
    out = {}
    offset = 0
    for t in header["tensors"]:
        shape = tuple(t["shape"])
        size = int(np.prod(shape)) if shape else 1
        out[t["name"]] = np.frombuffer(payload, dtype="<f8", count=size, offset=offset).reshape(shape).copy()
        offset += 8 * size
    if offset != len(payload):
        raise ValueError(f"{path}: payload size does not match header")
    return out, header["meta"]
