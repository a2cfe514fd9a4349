"""Binary matrix file formats (little-endian throughout).

Framed matrices ("LMEL" for log-Mel features, "PROB" for activity
probabilities) share one layout::

    magic: 4 bytes | rows: u32 | cols: u32 | hop_s: f64 | win_s: f64
    values: rows*cols f32, row-major

Lip feature files ("LIPF") carry no timing header::

    magic: 4 bytes | frames: u32 | dim: u32 | values: frames*dim f32
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

LMEL_MAGIC = b"LMEL"
PROB_MAGIC = b"PROB"

_FRAMED_HEADER = struct.Struct("<4sIIdd")
_PLAIN_HEADER = struct.Struct("<4sII")


def write_framed_matrix(path, magic: bytes, values: np.ndarray,
                        hop_s: float, win_s: float) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"framed matrix must be 2-D, got shape {values.shape}")
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(_FRAMED_HEADER.pack(magic, rows, cols, float(hop_s), float(win_s)))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_framed_matrix(path, magic: bytes) -> tuple[np.ndarray, float, float]:
    raw = Path(path).read_bytes()
    if len(raw) < _FRAMED_HEADER.size:
        raise DataError(f"{path}: truncated header")
    got, rows, cols, hop_s, win_s = _FRAMED_HEADER.unpack_from(raw)
    if got != magic:
        raise DataError(f"{path}: expected magic {magic!r}, found {got!r}")
    body = raw[_FRAMED_HEADER.size:]
    expected = rows * cols * 4
    if len(body) != expected:
        raise DataError(f"{path}: expected {expected} value bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)
    return values, hop_s, win_s


def write_lip_features(path, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"lip features must be 2-D, got shape {values.shape}")
    frames, dim = values.shape
    with open(path, "wb") as fh:
        fh.write(_PLAIN_HEADER.pack(b"LIPF", frames, dim))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_lip_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _PLAIN_HEADER.size:
        raise DataError(f"{path}: truncated header")
    got, frames, dim = _PLAIN_HEADER.unpack_from(raw)
    if got != b"LIPF":
        raise DataError(f"{path}: expected magic b'LIPF', found {got!r}")
    body = raw[_PLAIN_HEADER.size:]
    expected = frames * dim * 4
    if len(body) != expected:
        raise DataError(f"{path}: expected {expected} value bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(frames, dim).astype(np.float64)
