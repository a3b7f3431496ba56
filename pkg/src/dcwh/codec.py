"""Sign quantization and LSB-first bit packing of binary codes.

Logical code values live in {-1, +1}; packed bytes store +1 as a set bit.
Bit ``k`` of a code is bit ``k % 8`` of byte ``k // 8``, so viewing the
zero-padded bytes as little-endian uint64 words puts bit ``k`` at bit
``k % 64`` of word ``k // 64``.
"""

from dataclasses import dataclass
import struct

import numpy as np

from ._io import Reader, atomic_write
from .errors import ConfigError, DataError, DimensionError
from .net import embed

CODE_MAGIC = b"DCWB"
CODE_VERSION = 1


def n_bytes(bits):
    return (bits + 7) // 8


def n_words(bits):
    return (bits + 63) // 64


@dataclass(frozen=True)
class BinaryCode:
    data: np.ndarray  # uint8, (ceil(bits/8),)
    bits: int

    def __eq__(self, other):
        return (isinstance(other, BinaryCode) and self.bits == other.bits
                and np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.bits, self.data.tobytes()))

    def words(self):
        return bytes_to_words(self.data[None, :], self.bits)[0]


@dataclass
class CodeSet:
    """A batch of equal-length packed codes, one row per sample."""

    data: np.ndarray  # uint8, (N, ceil(bits/8))
    bits: int

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim != 2 or self.data.shape[1] != n_bytes(self.bits):
            raise DimensionError(
                f"packed array shape {self.data.shape} inconsistent with {self.bits} bits"
            )

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return BinaryCode(self.data[i].copy(), self.bits)
        return CodeSet(self.data[i], self.bits)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def words(self):
        return bytes_to_words(self.data, self.bits)

    def unpack(self):
        return unpack_rows(self)

    @classmethod
    def from_codes(cls, codes, bits=None):
        codes = list(codes)
        if bits is None:
            if not codes:
                raise DataError("cannot infer code length from an empty list")
            bits = codes[0].bits
        for c in codes:
            if c.bits != bits:
                raise DimensionError(f"mixed code lengths {c.bits} and {bits}")
        if not codes:
            return cls(np.zeros((0, n_bytes(bits)), np.uint8), bits)
        return cls(np.stack([c.data for c in codes]), bits)


def bytes_to_words(data, bits):
    """Re-view ``(N, nbytes)`` packed rows as ``(N, ceil(bits/64))`` uint64."""
    data = np.asarray(data, dtype=np.uint8)
    w = n_words(bits)
    padded = np.zeros((data.shape[0], 8 * w), dtype=np.uint8)
    padded[:, :data.shape[1]] = data
    return padded.view("<u8").astype(np.uint64, copy=False).reshape(data.shape[0], w)


def _check_pm1(v):
    v = np.asarray(v)
    bad = (v != 1) & (v != -1)
    if np.any(bad):
        raise DataError(f"code entries must be -1 or +1, found {v[bad].flat[0]!r}")
    return v


def pack(v):
    """Pack one {-1,+1} vector into a :class:`BinaryCode`."""
    v = _check_pm1(v)
    if v.ndim != 1:
        raise DimensionError(f"pack expects a vector, got shape {v.shape}")
    return BinaryCode(np.packbits(v > 0, bitorder="little"), int(v.shape[0]))


def unpack(code):
    bits = np.unpackbits(code.data, count=code.bits, bitorder="little")
    return bits.astype(np.int8) * 2 - 1


def pack_rows(m):
    """Pack a ``(N, L)`` {-1,+1} matrix into a :class:`CodeSet`."""
    m = _check_pm1(m)
    if m.ndim != 2:
        raise DimensionError(f"pack_rows expects a matrix, got shape {m.shape}")
    return CodeSet(np.packbits(m > 0, axis=1, bitorder="little"), int(m.shape[1]))


def unpack_rows(codes):
    bits = np.unpackbits(codes.data, axis=1, count=codes.bits, bitorder="little")
    return bits.astype(np.int8) * 2 - 1


def quantize(embeddings):
    """Pack ``r >= 0`` as +1 directly from real embeddings."""
    r = np.asarray(embeddings)
    return CodeSet(np.packbits(r >= 0, axis=1, bitorder="little"), int(r.shape[1]))


def encode(net, inputs):
    """Forward the inputs and apply the element-wise sign layer."""
    return quantize(embed(net, inputs))


def codes_to_bytes(codes, ids):
    ids = np.asarray(ids)
    if ids.shape != (len(codes),):
        raise DimensionError(f"{len(codes)} codes but ids shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() > 0xFFFFFFFF):
        raise DataError("sample ids must fit in u32")
    return b"".join([
        CODE_MAGIC,
        struct.pack("<III", CODE_VERSION, len(codes), codes.bits),
        codes.data.tobytes(),
        ids.astype("<u4").tobytes(),
    ])


def codes_from_bytes(buf, what="code file"):
    r = Reader(buf, what)
    r.expect_magic(CODE_MAGIC)
    r.expect_version({CODE_VERSION})
    count, bits = r.unpack("II")
    if bits == 0:
        raise ConfigError(f"{what}: zero-length codes")
    nb = n_bytes(bits)
    data = np.frombuffer(r.take(count * nb), dtype=np.uint8).reshape(count, nb)
    ids = np.frombuffer(r.take(4 * count), dtype="<u4").astype(np.int64)
    r.finish()
    if bits % 8 and count:
        pad_mask = np.uint8((0xFF << (bits % 8)) & 0xFF)
        if np.any(data[:, -1] & pad_mask):
            raise DataError(f"{what}: nonzero padding bits")
    return CodeSet(data.copy(), bits), ids


def save_codes(path, codes, ids):
    atomic_write(path, codes_to_bytes(codes, ids))


def load_codes(path):
    with open(path, "rb") as fh:
        return codes_from_bytes(fh.read(), what=str(path))
