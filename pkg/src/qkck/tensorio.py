"""Tensor dump format: one JSON header line, then raw little-endian float64 data.

The header records ``kind``, ``n``, ``shape``, ``dtype`` ("<f8") and the index
``convention`` ("lowered").  Headers are written with sorted keys so identical
tensors give byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

DTYPE = "<f8"


def dump_tensor(path, array, kind: str, n: int, **meta) -> dict:
    array = np.ascontiguousarray(np.asarray(array, dtype=DTYPE))
    header = {"kind": kind, "n": int(n), "shape": list(array.shape), "dtype": DTYPE,
              "convention": "lowered", **meta}
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(Path(path), "wb") as fh:
        fh.write(line + b"\n")
        fh.write(array.tobytes(order="C"))
    return header


def load_tensor(path) -> tuple[dict, np.ndarray]:
    with open(Path(path), "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = fh.read()
    if header.get("dtype") != DTYPE:
        raise ValueError(f"unsupported dtype {header.get('dtype')!r}")
    array = np.frombuffer(data, dtype=DTYPE).reshape(header["shape"]).copy()
    return header, array
