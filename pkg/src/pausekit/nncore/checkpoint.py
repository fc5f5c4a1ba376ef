"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic      4 bytes  b"PKCK"
    version    uint32   1
    count      uint32   number of records
    record * count:
        name_len   uint16, then name_len bytes of UTF-8 name
        ndim       uint8,  then ndim * uint32 dimensions
        dtype      uint8   1 = float32, 2 = float64
        trainable  uint8   0 or 1
        values     prod(dims) little-endian floats, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

MAGIC = b"PKCK"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


class CheckpointError(ValueError):
    pass


@dataclass
class Record:
    name: str
    values: np.ndarray
    trainable: bool = True


def records_from_module(module: nn.Module) -> list[Record]:
    return [Record(n, p.detach().cpu().numpy().copy(), p.requires_grad) for n, p in module.named_parameters()]


def write_records(path: str | Path, records: list[Record]) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for rec in records:
        arr = np.asarray(rec.values)
        if arr.dtype not in _CODES:
            arr = arr.astype(np.float64)
        name = rec.name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name)) + name)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(struct.pack("<BB", _CODES[arr.dtype], int(rec.trainable)))
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_records(path: str | Path) -> list[Record]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = 4
    try:
        version, count = struct.unpack_from("<II", data, pos)
        pos += 8
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        out = []
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            code, trainable = struct.unpack_from("<BB", data, pos)
            pos += 2
            dtype = _DTYPES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if pos + size > len(data):
                raise CheckpointError(f"{path}: truncated record {name!r}")
            values = np.frombuffer(data[pos:pos + size], dtype=dtype).reshape(shape).copy()
            pos += size
            out.append(Record(name, values, bool(trainable)))
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: {exc}") from None
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return out


def save_module(path: str | Path, module: nn.Module) -> None:
    write_records(path, records_from_module(module))


def load_into(module: nn.Module, records: list[Record], strict: bool = True) -> nn.Module:
    params = dict(module.named_parameters())
    seen = set()
    for rec in records:
        if rec.name not in params:
            if strict:
                raise CheckpointError(f"unexpected parameter {rec.name!r}")
            continue
        p = params[rec.name]
        if tuple(p.shape) != rec.values.shape:
            raise CheckpointError(f"shape mismatch for {rec.name!r}: {tuple(p.shape)} vs {rec.values.shape}")
        with torch.no_grad():
            p.copy_(torch.from_numpy(rec.values).to(p.dtype))
        p.requires_grad_(rec.trainable)
        seen.add(rec.name)
    missing = set(params) - seen
    if strict and missing:
        raise CheckpointError(f"missing parameters: {sorted(missing)[:5]}")
    return module


def load_module(path: str | Path, module: nn.Module, strict: bool = True) -> nn.Module:
    return load_into(module, read_records(path), strict)
