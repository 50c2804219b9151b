"""Secure sketch over a scaled cubic lattice, in exact fixed point.

Every sketch-domain value is an int64 array holding ``value * 2**20``
(Q43.20), so decoding, the difference vector and the recovered center are
bit-exact and hash identically everywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidArgumentError, OutOfSupportError, RangeError

FRAC_BITS = 20
ONE = 1 << FRAC_BITS
# coordinates stay within +-2**40 so sums and differences never overflow int64
FIXED_LIMIT = 1 << 40


def quantize(x) -> np.ndarray:
    """Round reals to the nearest multiple of 2**-20 (ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) >= float(1 << 20)):
        raise RangeError("coordinate outside the fixed-point range |x| < 2**20")
    return np.rint(x * ONE).astype(np.int64)


def dequantize(q) -> np.ndarray:
    return np.asarray(q, dtype=np.int64).astype(np.float64) / ONE


def check_fixed(q, name="vector"):
    q = np.asarray(q)
    if q.dtype.kind not in "iu":
        raise InvalidArgumentError(f"{name} must be an integer fixed-point array")
    q = q.astype(np.int64)
    if q.ndim != 1 or q.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty 1-d array")
    if np.any(np.abs(q) > FIXED_LIMIT):
        raise RangeError(f"{name} exceeds the fixed-point guard of 2**40")
    return q


@dataclass(frozen=True, eq=False)
class LatticeCodebook:
    """Codewords ``spacing * Z^dim`` restricted to a support sphere.

    ``spacing``, ``support_center`` and ``support_radius`` are fixed-point
    integers.
    """

    dim: int
    spacing: int
    support_center: np.ndarray
    support_radius: int

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError("dim must be positive")
        if not 0 < int(self.spacing) <= FIXED_LIMIT:
            raise InvalidArgumentError("spacing must be a positive fixed-point integer")
        center = check_fixed(self.support_center, "support center")
        if center.size != self.dim:
            raise InvalidArgumentError("support center dimension mismatch")
        if not 0 < int(self.support_radius) <= FIXED_LIMIT:
            raise InvalidArgumentError("support radius must be positive")
        center.setflags(write=False)
        object.__setattr__(self, "spacing", int(self.spacing))
        object.__setattr__(self, "support_radius", int(self.support_radius))
        object.__setattr__(self, "support_center", center)

    @classmethod
    def from_radius(cls, radius, support):
        """Codebook whose inscribed ball matches a decision radius (spacing 2r).

        ``support`` is anything with ``center`` and ``radius`` attributes.
        """
        spacing = max(1, int(quantize(2.0 * radius)))
        center = quantize(support.center)
        return cls(center.size, spacing, center, int(quantize(support.radius)))

    @property
    def spacing_real(self):
        return self.spacing / ONE

    def contains(self, point) -> bool:
        """Exact test ``|point - support_center| <= support_radius``."""
        diff = (np.asarray(point, dtype=np.int64) - self.support_center).tolist()
        return sum(d * d for d in diff) <= self.support_radius ** 2

    def __eq__(self, other):
        if not isinstance(other, LatticeCodebook):
            return NotImplemented
        return (self.dim == other.dim and self.spacing == other.spacing
                and self.support_radius == other.support_radius
                and np.array_equal(self.support_center, other.support_center))

    def to_bytes(self) -> bytes:
        return (struct.pack("<Iq", self.dim, self.spacing)
                + self.support_center.astype("<i8").tobytes()
                + struct.pack("<q", self.support_radius))

    @classmethod
    def from_bytes(cls, data: bytes):
        try:
            dim, spacing = struct.unpack_from("<Iq", data, 0)
            center = np.frombuffer(data, dtype="<i8", count=dim, offset=12).astype(np.int64)
            (radius,) = struct.unpack_from("<q", data, 12 + 8 * dim)
        except (struct.error, ValueError):
            raise FormatError("truncated lattice codebook parameters") from None
        if len(data) != 20 + 8 * dim:
            raise FormatError("trailing bytes in lattice codebook parameters")
        try:
            return cls(dim, spacing, center, radius)
        except (InvalidArgumentError, RangeError) as exc:
            raise FormatError(str(exc)) from None


@dataclass(frozen=True, eq=False)
class LatticeSketch:
    """Difference vector between a center and its nearest codeword."""

    dv: np.ndarray

    def __post_init__(self):
        dv = check_fixed(self.dv, "difference vector")
        dv.setflags(write=False)
        object.__setattr__(self, "dv", dv)

    @property
    def dim(self):
        return self.dv.size

    def __eq__(self, other):
        if not isinstance(other, LatticeSketch):
            return NotImplemented
        return np.array_equal(self.dv, other.dv)

    def to_bytes(self) -> bytes:
        return struct.pack("<I", self.dim) + self.dv.astype("<i8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes):
        if len(data) < 4:
            raise FormatError("truncated lattice sketch")
        (dim,) = struct.unpack_from("<I", data, 0)
        if len(data) != 4 + 8 * dim:
            raise FormatError("lattice sketch length does not match its dimension")
        dv = np.frombuffer(data, dtype="<i8", count=dim, offset=4).astype(np.int64)
        try:
            return cls(dv)
        except (InvalidArgumentError, RangeError) as exc:
            raise FormatError(str(exc)) from None


def _round_div_even(p, s):
    """round(p / s) with ties to the even integer, exact for int64 p and s > 0."""
    q, rem = np.divmod(p, s)
    twice = 2 * rem
    up = (twice > s) | ((twice == s) & (q % 2 == 1))
    return q + up


def decode_nearest(codebook, point) -> np.ndarray:
    """Nearest codeword: ``s * round(point / s)`` coordinate-wise."""
    point = check_fixed(point, "point")
    if point.size != codebook.dim:
        raise InvalidArgumentError(f"point dim {point.size} != codebook dim {codebook.dim}")
    return _round_div_even(point, codebook.spacing) * codebook.spacing


def make_sketch(codebook, center):
    """Registration: returns ``(LatticeSketch(center - codeword), codeword)``."""
    center = check_fixed(center, "center")
    if center.size != codebook.dim:
        raise InvalidArgumentError("center dimension does not match codebook")
    if not codebook.contains(center):
        raise OutOfSupportError("decision-region center lies outside the support sphere")
    codeword = decode_nearest(codebook, center)
    return LatticeSketch(center - codeword), codeword


def recover_center(codebook, sketch, probe) -> np.ndarray:
    """Verification: ``decode(probe - dv) + dv``."""
    probe = check_fixed(probe, "probe")
    if probe.size != codebook.dim or sketch.dim != codebook.dim:
        raise InvalidArgumentError("probe, sketch and codebook dimensions must agree")
    return decode_nearest(codebook, probe - sketch.dv) + sketch.dv
