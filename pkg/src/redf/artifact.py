"""Versioned binary model artifact.

Layout (integers and floats little-endian unless noted):

    magic       4 bytes  b"REDF"
    version     u16      format version, currently 1
    arch block  timesteps u32, features u32, units u32, dense_units u32,
                dropout f64
    scaler      kind u8 (0 = zscore, 1 = minmax), p1 f64, p2 f64
    weights     count u32, then per weight:
                  name_len u16 + name bytes (utf-8)
                  rows u32, cols u32 (cols = 0 marks a 1-D bias of length rows)
                  row-major float64 payload
    crc         u32      CRC32 of every preceding byte

Round trips are bitwise: deserialize(serialize(p, s)) reproduces every
weight exactly. Any failed check raises ArtifactError naming the check.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ArtifactError
from .lstm import HyperParams, ModelParams, init_params, param_items, set_param
from .numeric import make_rng
from .timeseries import MINMAX, ZSCORE, Scaler

MAGIC = b"REDF"
FORMAT_VERSION = 1

_SCALER_CODES = {ZSCORE: 0, MINMAX: 1}
_SCALER_KINDS = {v: k for k, v in _SCALER_CODES.items()}


def serialize(params: ModelParams, scaler: Scaler, path: str | Path) -> None:
    hyper = params.hyper
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<H", FORMAT_VERSION)
    buf += struct.pack("<IIII", hyper.timesteps, hyper.features, hyper.units,
                       hyper.dense_units)
    buf += struct.pack("<d", hyper.dropout)
    buf += struct.pack("<B", _SCALER_CODES[scaler.kind])
    buf += struct.pack("<dd", scaler.p1, scaler.p2)

    items = param_items(params)
    buf += struct.pack("<I", len(items))
    for name, arr in items:
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        if arr.ndim == 1:
            rows, cols = arr.shape[0], 0
        else:
            rows, cols = arr.shape
        buf += struct.pack("<II", rows, cols)
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(buf))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ArtifactError(f"shape check failed: truncated while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def deserialize(path: str | Path) -> tuple[ModelParams, Scaler]:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 2 + 4:
        raise ArtifactError("shape check failed: file shorter than fixed header")
    if data[:4] != MAGIC:
        raise ArtifactError(f"magic check failed: {data[:4]!r}")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    actual_crc = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ArtifactError(f"crc check failed: stored {stored_crc:#010x}, "
                            f"computed {actual_crc:#010x}")

    r = _Reader(data[:-4])
    r.take(4, "magic")
    (version,) = r.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise ArtifactError(f"version check failed: unsupported version {version}")
    timesteps, features, units, dense_units = r.unpack("<IIII", "architecture")
    (dropout,) = r.unpack("<d", "architecture")
    (scaler_code,) = r.unpack("<B", "scaler")
    if scaler_code not in _SCALER_KINDS:
        raise ArtifactError(f"scaler check failed: unknown kind code {scaler_code}")
    p1, p2 = r.unpack("<dd", "scaler")
    scaler = Scaler(kind=_SCALER_KINDS[scaler_code], p1=p1, p2=p2)

    try:
        hyper = HyperParams(units=units, dense_units=dense_units, timesteps=timesteps,
                            features=features, dropout=dropout).validate()
    except Exception as exc:
        raise ArtifactError(f"architecture check failed: {exc}") from exc
    params = init_params(hyper, make_rng(0))
    expected = {name: arr.shape for name, arr in param_items(params)}

    (count,) = r.unpack("<I", "weight count")
    if count != len(expected):
        raise ArtifactError(f"shape check failed: {count} weight blocks, "
                            f"expected {len(expected)}")
    seen: set[str] = set()
    for _ in range(count):
        (name_len,) = r.unpack("<H", "weight name")
        name = r.take(name_len, "weight name").decode("utf-8", errors="replace")
        rows, cols = r.unpack("<II", f"shape of {name}")
        if name not in expected:
            raise ArtifactError(f"shape check failed: unexpected weight {name!r}")
        if name in seen:
            raise ArtifactError(f"shape check failed: duplicate weight {name!r}")
        seen.add(name)
        shape = (rows,) if cols == 0 else (rows, cols)
        if shape != expected[name]:
            raise ArtifactError(f"shape check failed: {name} is {shape}, "
                                f"expected {expected[name]}")
        n_values = rows * max(cols, 1)
        payload = r.take(8 * n_values, f"payload of {name}")
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
        set_param(params, name, arr)
    if r.pos != len(r.data):
        raise ArtifactError(f"shape check failed: {len(r.data) - r.pos} trailing bytes")
    return params, scaler
