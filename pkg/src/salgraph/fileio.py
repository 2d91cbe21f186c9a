"""On-disk formats for maps and feature tensors.

GTSR1 is the binary tensor container used everywhere: magic ``GTSR1\\n``,
a little-endian u32 rank, rank u32 extents, then raw little-endian f32
values in row-major order.  Storage is f32; arrays come back as f64 for
compute.  Grayscale maps are additionally written as 8-bit binary PGM
after min-max scaling, for eyeballing.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

_MAGIC = b"GTSR1\n"


def tensor_to_bytes(array: np.ndarray) -> bytes:
    arr = np.asarray(array, dtype=np.float64)
    header = _MAGIC + struct.pack("<I", arr.ndim)
    header += b"".join(struct.pack("<I", extent) for extent in arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def tensor_from_bytes(raw: bytes, origin: str = "tensor") -> np.ndarray:
    if not raw.startswith(_MAGIC):
        raise DataFormatError(f"{origin}: not a GTSR1 payload")
    off = len(_MAGIC)
    if len(raw) < off + 4:
        raise DataFormatError(f"{origin}: truncated header")
    (rank,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + 4 * rank:
        raise DataFormatError(f"{origin}: truncated extent list")
    shape = struct.unpack_from(f"<{rank}I", raw, off) if rank else ()
    off += 4 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(raw) != off + 4 * count:
        raise DataFormatError(f"{origin}: payload size does not match extents {shape}")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
    return data.astype(np.float64).reshape(shape)


def save_tensor(path, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(array))


def load_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes(), origin=str(path))


def save_pgm(path, array: np.ndarray) -> None:
    """Write a 2-D map as binary PGM (P5), min-max scaled to 0..255."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim != 2:
        raise DataFormatError(f"PGM output needs a 2-D map, got shape {arr.shape}")
    lo, hi = arr.min(), arr.max()
    scaled = np.zeros_like(arr) if hi <= lo else (arr - lo) / (hi - lo)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM back as floats in [0, 1]."""
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    off = 0
    while len(fields) < 4 and off < len(raw):
        while off < len(raw) and raw[off:off + 1].isspace():
            off += 1
        if raw[off:off + 1] == b"#":
            while off < len(raw) and raw[off] != 0x0A:
                off += 1
            continue
        start = off
        while off < len(raw) and not raw[off:off + 1].isspace():
            off += 1
        fields.append(raw[start:off])
    if len(fields) != 4 or fields[0] != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    off += 1
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=off)
    if data.size != w * h:
        raise DataFormatError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.float64) / float(maxval)
