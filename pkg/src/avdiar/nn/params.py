"""Named model parameters: deterministic init and checkpoint round-trips.

Initialization derives every random draw from ``(seed, parameter name)``
through a splitmix64 counter stream, so creation order never affects the
resulting weights and two stores built from the same seed are bit-equal.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import DataError
from .tensor import Tensor

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of a UTF-8 string."""
    h = _FNV_OFFSET
    with np.errstate(over="ignore"):
        for byte in text.encode("utf-8"):
            h = (h ^ np.uint64(byte)) * _FNV_PRIME
    return int(h)


def splitmix64_uniform(key: int, count: int) -> np.ndarray:
    """``count`` doubles in [0, 1) from the splitmix64 stream at ``key``."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        states = np.uint64(key) + idx * _GOLDEN
        v = _mix64(states)
    return (v >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def parameter_key(seed: int, name: str) -> int:
    with np.errstate(over="ignore"):
        return int(_mix64(np.uint64(seed) ^ np.uint64(fnv1a64(name))))


def xavier_uniform(seed: int, name: str, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    u = splitmix64_uniform(parameter_key(seed, name), int(np.prod(shape)))
    return ((u * 2.0 - 1.0) * a).reshape(shape)


class ParameterStore:
    """Ordered name->Tensor mapping for one model's trainable weights."""

    def __init__(self, seed: int):
        self.seed = seed
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape: tuple[int, ...], init: str = "xavier",
            fan_in: int | None = None, fan_out: int | None = None) -> Tensor:
        """Create and register a parameter; names must be unique."""
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        if init == "xavier":
            if fan_in is None:
                fan_in = shape[0]
            if fan_out is None:
                fan_out = shape[-1]
            data = xavier_uniform(self.seed, name, shape, fan_in, fan_out)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def subset(self, prefixes: tuple[str, ...]) -> list[tuple[str, Tensor]]:
        """Parameters whose dotted name starts with any of the prefixes."""
        return [(n, t) for n, t in self._params.items()
                if any(n == p or n.startswith(p + ".") for p in prefixes)]

    # -- checkpoint format ---------------------------------------------------
    # magic "AVSD", u32 version, u32 count, then per parameter:
    #   u32 name length, name bytes (utf-8), u32 ndim, u32 dims...,
    #   float64 data, row-major little-endian.

    MAGIC = b"AVSD"
    VERSION = 1

    def save(self, path) -> None:
        save_arrays(path, {name: t.data for name, t in self._params.items()})

    def load(self, path) -> None:
        """Overwrite stored values in place from a checkpoint file.

        The checkpoint must carry exactly the names and shapes this store
        already holds, so a model must be constructed before loading.
        """
        loaded = load_checkpoint(path)
        missing = set(self._params) - set(loaded)
        extra = set(loaded) - set(self._params)
        if missing or extra:
            raise DataError(
                f"checkpoint mismatch: missing {sorted(missing)}, "
                f"unexpected {sorted(extra)}")
        for name, data in loaded.items():
            t = self._params[name]
            if data.shape != t.shape:
                raise DataError(
                    f"checkpoint shape mismatch for {name!r}: "
                    f"{data.shape} vs {t.shape}")
            t.data = data


def save_arrays(path, items: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays in the checkpoint record format."""
    with open(path, "wb") as f:
        f.write(ParameterStore.MAGIC)
        f.write(struct.pack("<II", ParameterStore.VERSION, len(items)))
        for name, data in items.items():
            data = np.asarray(data, dtype=np.float64)
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint into a name->array dict."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != ParameterStore.MAGIC:
        raise DataError(f"not a checkpoint file: {path}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != ParameterStore.VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    off = 12
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
            off += 8 * n
            out[name] = data.reshape(shape).astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise DataError(f"truncated checkpoint: {path}") from exc
    if off != len(blob):
        raise DataError(f"trailing bytes in checkpoint: {path}")
    return out
