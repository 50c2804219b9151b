"""Code-offset secure sketch over GF(2) with Hamming codes.

Bit vectors are uint8 arrays of 0/1 values. Templates are cut into blocks
of the code length (zero padded at the end), each block decoded
independently by syndrome lookup.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EnrollmentError, FormatError, InvalidArgumentError, UncorrectableError


def as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgumentError("bit vector must be a non-empty 1-d sequence")
    if not np.all((arr == 0) | (arr == 1)):
        raise InvalidArgumentError("bit vector entries must be 0 or 1")
    return arr.astype(np.uint8)


def pack_bits(bits) -> bytes:
    """Bit i goes to byte i // 8, position i % 8 (little-endian within bytes)."""
    return np.packbits(as_bits(bits), bitorder="little").tobytes()


def unpack_bits(data: bytes, length: int) -> np.ndarray:
    if len(data) != (length + 7) // 8:
        raise FormatError("packed bit length mismatch")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if np.any(bits[length:]):
        raise FormatError("non-zero padding bits in packed vector")
    return bits[:length].astype(np.uint8)


def binarize(x) -> np.ndarray:
    """Sign quantisation: 1 where x >= 0 (zero included), else 0."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("cannot binarize non-finite values")
    return (x >= 0.0).astype(np.uint8)


def _syndrome_key(bits):
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


class LinearCode:
    """Binary linear block code with a minimum-weight syndrome table.

    Only error patterns of weight <= t are tabulated, so a syndrome outside
    the table means the word is not decodable within the guaranteed radius.
    """

    def __init__(self, generator, parity_check, t, name=""):
        self.generator = as_bits_matrix(generator)
        self.parity_check = as_bits_matrix(parity_check)
        self.k, self.n = self.generator.shape
        if self.parity_check.shape != (self.n - self.k, self.n):
            raise InvalidArgumentError("parity-check matrix has the wrong shape")
        if np.any((self.generator.astype(np.int64) @ self.parity_check.T) % 2):
            raise InvalidArgumentError("G * H^T must vanish over GF(2)")
        self.t = int(t)
        self.name = name
        self.syndrome_table = {}
        for weight in range(self.t + 1):
            for positions in itertools.combinations(range(self.n), weight):
                pattern = np.zeros(self.n, dtype=np.uint8)
                pattern[list(positions)] = 1
                key = _syndrome_key(self.syndrome(pattern))
                if key in self.syndrome_table:
                    raise InvalidArgumentError(f"two error patterns of weight <= {t} share a syndrome")
                self.syndrome_table[key] = pattern

    def __repr__(self):
        return f"LinearCode({self.name or f'n={self.n}, k={self.k}'}, t={self.t})"

    def syndrome(self, word):
        return ((self.parity_check.astype(np.int64) @ word) % 2).astype(np.uint8)

    def encode(self, message):
        return ((as_bits(message).astype(np.int64) @ self.generator) % 2).astype(np.uint8)

    def codewords(self):
        for m in itertools.product((0, 1), repeat=self.k):
            yield self.encode(np.array(m, dtype=np.uint8))


def as_bits_matrix(m):
    arr = np.asarray(m)
    if arr.ndim != 2 or not np.all((arr == 0) | (arr == 1)):
        raise InvalidArgumentError("expected a 2-d 0/1 matrix")
    return arr.astype(np.uint8)


def hamming_code(r):
    """Systematic Hamming(2^r - 1, 2^r - 1 - r) code, t = 1."""
    n = (1 << r) - 1
    k = n - r
    cols = [c for c in range(1, n + 1) if c & (c - 1)]  # weight >= 2
    P = np.array([[(c >> j) & 1 for j in range(r)] for c in cols], dtype=np.uint8)
    G = np.hstack([np.eye(k, dtype=np.uint8), P])
    H = np.hstack([P.T, np.eye(r, dtype=np.uint8)])
    return LinearCode(G, H, 1, name=f"Hamming({n},{k})")


HAMMING_7_4 = hamming_code(3)
HAMMING_15_11 = hamming_code(4)

CODES = {1: HAMMING_7_4, 2: HAMMING_15_11}


def syndrome_decode(code, word):
    """Correct up to t errors; raises :class:`UncorrectableError` otherwise."""
    word = as_bits(word)
    if word.size != code.n:
        raise InvalidArgumentError(f"word length {word.size} != code length {code.n}")
    pattern = code.syndrome_table.get(_syndrome_key(code.syndrome(word)))
    if pattern is None:
        raise UncorrectableError("syndrome not correctable within t errors")
    return word ^ pattern


@dataclass(frozen=True)
class CodeLayout:
    """Which code, how many blocks, and how many trailing zero pad bits."""

    code_id: int
    blocks: int
    pad_bits: int

    def __post_init__(self):
        if self.code_id not in CODES:
            raise InvalidArgumentError(f"unknown code id {self.code_id}")
        if self.blocks < 1 or not 0 <= self.pad_bits < self.code.n * self.blocks:
            raise InvalidArgumentError("invalid block layout")

    @classmethod
    def for_length(cls, length, code_id=1):
        n = CODES[code_id].n if code_id in CODES else None
        if n is None:
            raise InvalidArgumentError(f"unknown code id {code_id}")
        blocks = math.ceil(length / n)
        return cls(code_id, blocks, blocks * n - length)

    @property
    def code(self):
        return CODES[self.code_id]

    @property
    def total_bits(self):
        return self.blocks * self.code.n

    @property
    def data_bits(self):
        return self.total_bits - self.pad_bits

    def to_bytes(self):
        return struct.pack("<HHH", self.code_id, self.blocks, self.pad_bits)

    @classmethod
    def from_bytes(cls, data):
        if len(data) != 6:
            raise FormatError("code descriptor must be 6 bytes")
        try:
            return cls(*struct.unpack("<HHH", data))
        except InvalidArgumentError as exc:
            raise FormatError(str(exc)) from None


@dataclass(frozen=True, eq=False)
class BinarySketch:
    dv_bits: np.ndarray
    layout: CodeLayout

    def __post_init__(self):
        bits = as_bits(self.dv_bits)
        if bits.size != self.layout.total_bits:
            raise InvalidArgumentError("dv length must equal the coded length")
        bits.setflags(write=False)
        object.__setattr__(self, "dv_bits", bits)

    def __eq__(self, other):
        if not isinstance(other, BinarySketch):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.dv_bits, other.dv_bits)

    def to_bytes(self):
        return struct.pack("<I", self.dv_bits.size) + pack_bits(self.dv_bits)

    @classmethod
    def from_bytes(cls, data, layout):
        if len(data) < 4:
            raise FormatError("truncated binary sketch")
        (length,) = struct.unpack_from("<I", data, 0)
        bits = unpack_bits(data[4:], length)
        try:
            return cls(bits, layout)
        except InvalidArgumentError as exc:
            raise FormatError(str(exc)) from None


def _padded(layout, bits):
    bits = as_bits(bits)
    if bits.size != layout.data_bits:
        raise InvalidArgumentError(f"expected {layout.data_bits} bits, got {bits.size}")
    return np.concatenate([bits, np.zeros(layout.pad_bits, dtype=np.uint8)])


def make_binary_sketch(layout, template):
    """Registration: per block, dv = template XOR nearest codeword.

    Returns ``(BinarySketch, codeword)``; the codeword is the padded length.
    """
    word = _padded(layout, template)
    n = layout.code.n
    codeword = np.empty_like(word)
    for b in range(layout.blocks):
        block = word[b * n:(b + 1) * n]
        try:
            codeword[b * n:(b + 1) * n] = syndrome_decode(layout.code, block)
        except UncorrectableError:
            raise EnrollmentError(f"block {b} is too far from the code") from None
    return BinarySketch(word ^ codeword, layout), codeword


def recover_binary_center(layout, sketch, probe):
    """Verification: decode(probe XOR dv) XOR dv per block, padding stripped.

    Raises :class:`UncorrectableError` if any block fails to decode.
    """
    word = _padded(layout, probe) ^ sketch.dv_bits
    n = layout.code.n
    out = np.empty_like(word)
    for b in range(layout.blocks):
        out[b * n:(b + 1) * n] = syndrome_decode(layout.code, word[b * n:(b + 1) * n])
    out ^= sketch.dv_bits
    return out[:layout.data_bits]
