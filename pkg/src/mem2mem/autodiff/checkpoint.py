"""Single-file tensor container.

Layout: 8-byte little-endian header length, a UTF-8 JSON header, then the raw
little-endian row-major bytes of each array at the offset the header records.
The header's ``"__meta__"`` key carries arbitrary JSON metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header: dict = {}
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dt = arr.dtype.name
        if dt not in _DTYPES:
            raise TypeError(f"unsupported dtype {dt} for {name!r}")
        raw = arr.astype(_DTYPES[dt], copy=False).tobytes(order="C")
        header[name] = {"shape": list(arr.shape), "dtype": dt, "offset": offset, "nbytes": len(raw)}
        chunks.append(raw)
        offset += len(raw)
    if meta is not None:
        header["__meta__"] = meta
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for raw in chunks:
            fh.write(raw)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: truncated checkpoint header")
    (hlen,) = struct.unpack("<Q", data[:8])
    if 8 + hlen > len(data):
        raise ValueError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValueError(f"{path}: corrupt checkpoint header ({e})") from None
    meta = header.pop("__meta__", {})
    base = 8 + hlen
    arrays = {}
    for name, info in header.items():
        start = base + info["offset"]
        raw = data[start : start + info["nbytes"]]
        if len(raw) != info["nbytes"]:
            raise ValueError(f"{path}: truncated data for {name!r}")
        arr = np.frombuffer(raw, dtype=_DTYPES[info["dtype"]]).reshape(info["shape"])
        arrays[name] = arr.astype(info["dtype"]).copy()
    return arrays, meta
