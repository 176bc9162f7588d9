"""Dense row-major tensors and the ``MRT1`` binary container.

Two element types exist. ``REAL32`` stores IEEE-754 single precision values.
``FIX16`` stores raw two's-complement 16-bit codes; the real value of a code
is ``code / 2**frac_bits``. All arithmetic in the engine works on the raw
codes, so ``Tensor.data`` for a FIX16 tensor holds integers.
"""

from __future__ import annotations

import itertools
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, Sequence, Union

import numpy as np

from .errors import BadMagic, OutOfRange, TensorFormatError, TruncatedPayload, UnknownDtype

MAGIC = b"MRT1"
FIX16_MIN = -(1 << 15)
FIX16_MAX = (1 << 15) - 1

_HEADER = struct.Struct("<4sBBH")


@dataclass(frozen=True)
class DType:
    kind: str  # "REAL32" or "FIX16"
    frac_bits: int = 0

    def __post_init__(self):
        if self.kind not in ("REAL32", "FIX16"):
            raise UnknownDtype(f"unknown dtype {self.kind!r}")
        if self.kind == "FIX16" and not 0 <= self.frac_bits <= 15:
            raise UnknownDtype(f"frac_bits must be in 0..15, got {self.frac_bits}")
        if self.kind == "REAL32" and self.frac_bits != 0:
            raise UnknownDtype("REAL32 carries no frac_bits")

    @property
    def is_fixed(self) -> bool:
        return self.kind == "FIX16"

    @property
    def code(self) -> int:
        return 1 if self.is_fixed else 0

    @property
    def numpy_dtype(self) -> np.dtype:
        return np.dtype("<i2") if self.is_fixed else np.dtype("<f4")

    def __str__(self) -> str:
        return f"FIX16({self.frac_bits})" if self.is_fixed else "REAL32"


REAL32 = DType("REAL32")


def fix16(frac_bits: int = 8) -> DType:
    return DType("FIX16", frac_bits)


def parse_dtype(text: str) -> DType:
    """Parse ``real32``, ``fix16`` or ``fix16:<frac_bits>``."""
    name, _, frac = text.strip().lower().partition(":")
    if name == "real32":
        return REAL32
    if name == "fix16":
        return fix16(int(frac) if frac else 8)
    raise UnknownDtype(f"unknown dtype {text!r}")


def saturate16(values):
    return np.clip(values, FIX16_MIN, FIX16_MAX)


class Tensor:
    """Immutable dense tensor.

    ``data`` is a flat read-only numpy array in row-major order. Use
    :meth:`array` for an N-d view.
    """

    __slots__ = ("shape", "dtype", "data")

    def __init__(self, shape: Sequence[int], dtype: DType, data):
        shape = tuple(int(s) for s in shape)
        if len(shape) < 1:
            raise ValueError("rank must be at least 1")
        if any(s < 1 for s in shape):
            raise ValueError(f"every extent must be >= 1, got {shape}")
        flat = np.asarray(data).reshape(-1)
        if flat.size != int(np.prod(shape)):
            raise ValueError(f"data length {flat.size} does not match shape {shape}")
        if dtype.is_fixed:
            if flat.size and (flat.min() < FIX16_MIN or flat.max() > FIX16_MAX):
                raise ValueError("FIX16 code out of 16-bit range")
        flat = flat.astype(dtype.numpy_dtype.newbyteorder("="), copy=True)
        flat.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "dtype", dtype)
        object.__setattr__(self, "data", flat)

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    @classmethod
    def from_array(cls, array, dtype: DType = REAL32) -> "Tensor":
        """Wrap an array of *storage* values (raw codes for FIX16)."""
        array = np.asarray(array)
        if array.ndim == 0:
            array = array.reshape(1)
        return cls(array.shape, dtype, array)

    @classmethod
    def from_real(cls, values, dtype: DType = REAL32) -> "Tensor":
        """Quantize real values into ``dtype`` (round half to even, saturate)."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 0:
            values = values.reshape(1)
        if dtype.is_fixed:
            codes = saturate16(np.rint(values * (1 << dtype.frac_bits)))
            return cls(values.shape, dtype, codes.astype(np.int64))
        return cls(values.shape, dtype, values)

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def array(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    def to_real(self) -> np.ndarray:
        """Real-valued float64 copy in N-d shape."""
        out = self.data.astype(np.float64)
        if self.dtype.is_fixed:
            out /= 1 << self.dtype.frac_bits
        return out.reshape(self.shape)

    def offset(self, idx: Sequence[int]) -> int:
        if len(idx) != len(self.shape):
            raise OutOfRange(f"index rank {len(idx)} != tensor rank {len(self.shape)}")
        off = 0
        for i, extent in zip(idx, self.shape):
            if not 0 <= i < extent:
                raise OutOfRange(f"index {tuple(idx)} outside shape {self.shape}")
            off = off * extent + i
        return off

    def at(self, idx: Sequence[int]):
        """Stored scalar at ``idx`` (raw code for FIX16)."""
        return self.data[self.offset(idx)].item()

    def value_at(self, idx: Sequence[int]) -> float:
        v = float(self.at(idx))
        if self.dtype.is_fixed:
            v /= 1 << self.dtype.frac_bits
        return v

    def same_bits(self, other: "Tensor") -> bool:
        return (
            self.shape == other.shape
            and self.dtype == other.dtype
            and self.data.tobytes() == other.data.tobytes()
        )

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.same_bits(other)

    __hash__ = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def tensor_at(t: Tensor, idx: Sequence[int]):
    return t.at(idx)


def ndrange(shape: Sequence[int]) -> Iterator[tuple]:
    """Row-major enumeration of every multi-index of ``shape``."""
    return itertools.product(*(range(s) for s in shape))


# --- MRT1 I/O ---------------------------------------------------------------


def to_bytes(t: Tensor) -> bytes:
    header = _HEADER.pack(MAGIC, t.dtype.code, t.dtype.frac_bits, t.rank)
    extents = struct.pack(f"<{t.rank}I", *t.shape)
    payload = t.data.astype(t.dtype.numpy_dtype, copy=False).tobytes()
    return header + extents + payload


def from_bytes(buf: bytes) -> Tensor:
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {buf[:4]!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedPayload("header truncated")
    _, code, frac_bits, rank = _HEADER.unpack_from(buf, 0)
    if code == 0:
        if frac_bits != 0:
            raise UnknownDtype("REAL32 header with non-zero frac_bits")
        dtype = REAL32
    elif code == 1:
        dtype = fix16(frac_bits)
    else:
        raise UnknownDtype(f"unknown dtype code {code}")
    if rank < 1:
        raise TensorFormatError("rank 0 tensor")
    pos = _HEADER.size
    if len(buf) < pos + 4 * rank:
        raise TruncatedPayload("extent table truncated")
    shape = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    count = int(np.prod(shape))
    nbytes = count * dtype.numpy_dtype.itemsize
    if len(buf) - pos < nbytes:
        raise TruncatedPayload(f"payload has {len(buf) - pos} bytes, need {nbytes}")
    if len(buf) - pos > nbytes:
        raise TensorFormatError("trailing bytes after payload")
    data = np.frombuffer(buf, dtype=dtype.numpy_dtype, count=count, offset=pos)
    return Tensor(shape, dtype, data)


PathOrStream = Union[str, os.PathLike, BinaryIO]


def write_tensor(t: Tensor, dest: PathOrStream) -> None:
    blob = to_bytes(t)
    if hasattr(dest, "write"):
        dest.write(blob)
    else:
        with open(dest, "wb") as fh:
            fh.write(blob)


def read_tensor(src: PathOrStream) -> Tensor:
    if hasattr(src, "read"):
        return from_bytes(src.read())
    with open(src, "rb") as fh:
        return from_bytes(fh.read())
