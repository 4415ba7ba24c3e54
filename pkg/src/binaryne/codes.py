"""Bit-packed binary codes: one d-bit code per node in 64-bit little-endian words.

Bit ``r`` of node ``i`` lives in word ``r // 64`` at bit position ``r % 64``;
bit value 1 encodes +1 and 0 encodes -1. Tail bits past ``d`` are always zero.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

CODE_MAGIC = b"BNEC"
CODE_VERSION = 1
_HEADER = struct.Struct("<4sIQI")
HEADER_BYTES = _HEADER.size


def words_for(d: int) -> int:
    return (d + 63) // 64


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    data: np.ndarray  # (node_count, words_per_code) uint64
    d: int

    def __post_init__(self):
        if self.data.dtype != np.uint64 or self.data.ndim != 2:
            raise ValueError("code data must be a 2-D uint64 array")
        if self.data.shape[1] != words_for(self.d):
            raise ValueError(f"{self.data.shape[1]} words per code does not fit d={self.d}")

    @property
    def node_count(self) -> int:
        return self.data.shape[0]

    @property
    def words_per_code(self) -> int:
        return self.data.shape[1]

    @property
    def payload_bytes(self) -> int:
        return self.data.size * 8

    def __eq__(self, other):
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return self.d == other.d and np.array_equal(self.data, other.data)

    def bits(self) -> np.ndarray:
        """Unpacked (node_count, d) 0/1 array."""
        as_bytes = self.data.astype("<u8").view(np.uint8).reshape(self.node_count, -1)
        return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :self.d]

    def signs(self) -> np.ndarray:
        return self.bits().astype(np.int8) * 2 - 1

    def tail_is_zero(self) -> bool:
        spare = self.words_per_code * 64 - self.d
        if spare == 0 or self.node_count == 0:
            return True
        mask = np.uint64(((1 << spare) - 1) << (64 - spare))
        return not (self.data[:, -1] & mask).any()

    @classmethod
    def from_bits(cls, bits) -> "CodeMatrix":
        bits = np.asarray(bits).astype(bool)
        if bits.ndim != 2:
            raise ValueError("bits must be 2-D")
        n, d = bits.shape
        if d < 1:
            raise ValueError("codes need at least one bit")
        w = words_for(d)
        padded = np.zeros((n, w * 64), dtype=bool)
        padded[:, :d] = bits
        packed = np.packbits(padded, axis=1, bitorder="little")
        data = packed.view("<u8").astype(np.uint64).reshape(n, w)
        return cls(data=np.ascontiguousarray(data), d=d)


def binarize(W_in) -> CodeMatrix:
    """Code bit r of node i is 1 iff W_in[i, r] >= 0.

    Thresholding tanh(beta * x) at zero is the same for every beta > 0, so the
    codes depend on W_in only. Accepts a ModelParams or a raw matrix.
    """
    W = getattr(W_in, "W_in", W_in)
    return CodeMatrix.from_bits(np.asarray(W) >= 0)


def save_codes(codes: CodeMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CODE_MAGIC, CODE_VERSION, codes.node_count, codes.d))
        fh.write(np.ascontiguousarray(codes.data, dtype="<u8").tobytes())


def load_codes(path) -> CodeMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_BYTES:
        raise ValueError(f"{path}: truncated code file header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != CODE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != CODE_VERSION:
        raise ValueError(f"{path}: unsupported code file version {version}")
    if d < 1:
        raise ValueError(f"{path}: invalid code length {d}")
    w = words_for(d)
    expected = HEADER_BYTES + n * w * 8
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {n} codes of {d} bits, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<u8", offset=HEADER_BYTES).astype(np.uint64).reshape(n, w)
    codes = CodeMatrix(data=data, d=d)
    if not codes.tail_is_zero():
        raise ValueError(f"{path}: non-zero bits beyond d={d}")
    return codes
