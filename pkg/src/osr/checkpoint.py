"""Binary checkpoint files.

Layout, all integers little-endian u32::

    b"OSR1"  version  n_tensors
    n_tensors x { name_len  name(utf-8)  rows  cols  rows*cols float32 (row-major) }
    json_len  json(utf-8)

The JSON blob carries the patch geometry, model flags and free-form
metadata, written with sorted keys so identical models give identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import PARAM_NAMES, RnnModel
from .patching import PatchGeometry

__all__ = ["MAGIC", "VERSION", "CheckpointFormatError", "save_checkpoint",
           "load_checkpoint", "dumps", "loads"]

MAGIC = b"OSR1"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointFormatError(ValueError):
    pass


def dumps(model: RnnModel) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(PARAM_NAMES))]
    for name, arr in model.params.items():
        mat = np.atleast_2d(arr).astype("<f4")
        raw = name.encode()
        parts += [_U32.pack(len(raw)), raw, _U32.pack(mat.shape[0]), _U32.pack(mat.shape[1]),
                  np.ascontiguousarray(mat).tobytes()]
    blob = json.dumps({
        "geometry": model.geom.to_dict(),
        "n_n": model.n_n,
        "residual": model.residual,
        "dtype": np.dtype(model.dtype).name,
        "layout": "row-major",
        "meta": model.meta,
    }, sort_keys=True, separators=(",", ":")).encode()
    parts += [_U32.pack(len(blob)), blob]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("truncated checkpoint")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def loads(data: bytes) -> RnnModel:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("bad magic bytes; not an OSR1 checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode()
        rows, cols = r.u32(), r.u32()
        tensors[name] = np.frombuffer(r.take(4 * rows * cols), dtype="<f4").reshape(rows, cols)
    try:
        info = json.loads(r.take(r.u32()).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"corrupt metadata: {exc}") from exc
    if r.pos != len(data):
        raise CheckpointFormatError("trailing bytes after checkpoint metadata")
    missing = set(PARAM_NAMES) - set(tensors)
    if missing:
        raise CheckpointFormatError(f"missing tensors: {sorted(missing)}")
    dtype = np.dtype(info.get("dtype", "float32"))
    params = {k: tensors[k].astype(dtype) for k in PARAM_NAMES}
    params["b"] = params["b"].reshape(-1)
    return RnnModel(**params, geom=PatchGeometry.from_dict(info["geometry"]),
                    residual=bool(info["residual"]), meta=info.get("meta", {}))


def save_checkpoint(model: RnnModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(model))


def load_checkpoint(path) -> RnnModel:
    return loads(Path(path).read_bytes())
