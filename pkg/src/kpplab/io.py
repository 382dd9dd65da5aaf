"""KPPG snapshot container (little-endian).

Layout::

    magic   b"KPPG"
    version u32 = 1
    payload u32   1 = f64 field, 2 = bitmask (1 bit per cell, packed LSB first)
    N       u32
    dims    u64 * N
    spacing f64 * N
    origin  f64 * N
    time    f64
    payload row-major
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import GridField, GridMask, GridSpec

MAGIC = b"KPPG"
VERSION = 1
PAYLOAD_FIELD = 1
PAYLOAD_BITMASK = 2


def _header(grid: GridSpec, payload: int, time: float) -> bytes:
    n = grid.ndim
    return b"".join([
        MAGIC,
        struct.pack("<III", VERSION, payload, n),
        struct.pack(f"<{n}Q", *grid.dims),
        struct.pack(f"<{n}d", *grid.spacing),
        struct.pack(f"<{n}d", *grid.origin),
        struct.pack("<d", time),
    ])


def encode_field(field: GridField) -> bytes:
    body = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    return _header(field.grid, PAYLOAD_FIELD, float(field.time)) + body


def encode_mask(mask: GridMask) -> bytes:
    bits = np.packbits(np.ascontiguousarray(mask.bits, dtype=bool).ravel(order="C"), bitorder="little")
    return _header(mask.grid, PAYLOAD_BITMASK, 0.0) + bits.tobytes()


def decode(data: bytes) -> GridField | GridMask:
    if len(data) < 16 or data[:4] != MAGIC:
        raise FormatError("not a KPPG container")
    version, payload, n = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported KPPG version {version}")
    off = 16
    need = off + n * 24 + 8
    if len(data) < need:
        raise FormatError("truncated KPPG header")
    dims = struct.unpack_from(f"<{n}Q", data, off)
    off += 8 * n
    spacing = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    origin = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    (time,) = struct.unpack_from("<d", data, off)
    off += 8
    grid = GridSpec(tuple(int(d) for d in dims), tuple(spacing), tuple(origin))
    count = int(np.prod(dims))
    if payload == PAYLOAD_FIELD:
        if len(data) - off != 8 * count:
            raise FormatError("field payload size mismatch")
        vals = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(dims).astype(float)
        return GridField(grid, vals, float(time))
    if payload == PAYLOAD_BITMASK:
        nbytes = (count + 7) // 8
        if len(data) - off != nbytes:
            raise FormatError("bitmask payload size mismatch")
        packed = np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off)
        bits = np.unpackbits(packed, count=count, bitorder="little").astype(bool).reshape(dims)
        return GridMask(grid, bits)
    raise FormatError(f"unknown payload code {payload}")


def write_kppg(path, obj: GridField | GridMask) -> Path:
    path = Path(path)
    data = encode_field(obj) if isinstance(obj, GridField) else encode_mask(obj)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return path


def read_kppg(path) -> GridField | GridMask:
    return decode(Path(path).read_bytes())


class SnapshotWriter:
    """Snapshot sink writing ``snap_<k>.kppg`` files into a directory."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.paths: list[Path] = []

    def __call__(self, field: GridField) -> None:
        p = self.directory / f"snap_{len(self.paths):05d}.kppg"
        write_kppg(p, field)
        self.paths.append(p)


def load_snapshots(directory) -> list[GridField]:
    files = sorted(Path(directory).glob("snap_*.kppg"))
    out = [read_kppg(p) for p in files]
    return [f for f in out if isinstance(f, GridField)]
