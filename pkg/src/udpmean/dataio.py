"""The ``UDP1`` binary dataset container and its JSON sidecar.

Layout (little-endian): ``b"UDP1"``, u32 n, u32 m, u32 d, u8 kind
(0 = real, 1 = categorical), then row-major float64 samples ``(n, m, d)`` or
u32 categories ``(n, m)``. The sidecar ``<path>.json`` holds the generating
spec and the true mean.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .userlevel import DiscreteSamples, UserDataset

MAGIC = b"UDP1"
_HEADER = struct.Struct("<4sIIIB")
KIND_REAL = 0
KIND_CATEGORICAL = 1


class DatasetFormatError(ValueError):
    pass


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_dataset(path, dataset: UserDataset | DiscreteSamples, meta: dict | None = None) -> None:
    path = Path(path)
    if isinstance(dataset, DiscreteSamples):
        n, m = dataset.data.shape
        d, kind = dataset.d, KIND_CATEGORICAL
        body = dataset.data.astype("<u4").tobytes(order="C")
    else:
        n, m, d = dataset.data.shape
        kind = KIND_REAL
        body = dataset.data.astype("<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, m, d, kind))
        fh.write(body)
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def read_dataset(path) -> UserDataset | DiscreteSamples:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, n, m, d, kind = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    payload = memoryview(raw)[_HEADER.size:]
    if kind == KIND_REAL:
        want = n * m * d * 8
        if len(payload) != want:
            raise DatasetFormatError(f"{path}: expected {want} payload bytes, found {len(payload)}")
        arr = np.frombuffer(payload, dtype="<f8").reshape(n, m, d).astype(np.float64)
        try:
            return UserDataset(arr)
        except ValueError as e:
            raise DatasetFormatError(f"{path}: {e}") from e
    if kind == KIND_CATEGORICAL:
        want = n * m * 4
        if len(payload) != want:
            raise DatasetFormatError(f"{path}: expected {want} payload bytes, found {len(payload)}")
        arr = np.frombuffer(payload, dtype="<u4").reshape(n, m).astype(np.int64)
        try:
            return DiscreteSamples(arr, d)
        except ValueError as e:
            raise DatasetFormatError(f"{path}: {e}") from e
    raise DatasetFormatError(f"{path}: unknown kind byte {kind}")


def read_sidecar(path) -> dict | None:
    p = sidecar_path(path)
    if not p.exists():
        return None
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{p}: {e}") from e
