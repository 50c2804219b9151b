"""Authentication records: salted digests of recovered centers, and the store.

A record keeps exactly the public helper data needed to re-derive and
check a user's center: codebook parameters, the difference vector, the
salt and the digest. The center itself is never persisted.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import secrets
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import binary, lattice
from .errors import (ConflictError, EnrollmentError, FormatError, InvalidArgumentError,
                     NFEError, OutOfSupportError)
from .expander import forward_batch
from .geometry import RADIUS_FLOOR, fit_user_region

CENTER_MAGIC = b"NFEC1"
STORE_MAGIC = b"NFES1"
STORE_VERSION = 1
SALT_BYTES = 16
DIGEST_BYTES = 32
PEPPER_ENV = "NFE_PEPPER"

SCHEMES = {"lattice": 1, "binary": 2}
_SCHEME_NAMES = {v: k for k, v in SCHEMES.items()}


def canonical_serialize(center, salt, scheme="lattice") -> bytes:
    """Fixed-width encoding of a center for hashing.

    ``NFEC1 | scheme u8 | dim u32 | payload | salt`` where the payload is
    int64 LE per coordinate (lattice) or packed bits (binary).
    """
    if len(salt) != SALT_BYTES:
        raise InvalidArgumentError(f"salt must be {SALT_BYTES} bytes")
    if scheme == "lattice":
        center = lattice.check_fixed(center, "center")
        payload = center.astype("<i8").tobytes()
    elif scheme == "binary":
        center = binary.as_bits(center)
        payload = binary.pack_bits(center)
    else:
        raise InvalidArgumentError(f"unknown scheme {scheme!r}")
    return (CENTER_MAGIC + bytes([SCHEMES[scheme]]) + struct.pack("<I", center.size)
            + payload + bytes(salt))


def hash_digest(payload: bytes, pepper: bytes | None = None) -> bytes:
    """SHA-256 over ``pepper || payload``; no pepper is the same as an empty one."""
    if not payload:
        raise InvalidArgumentError("payload must be non-empty")
    return hashlib.sha256((pepper or b"") + payload).digest()


def pepper_from_env(environ=None) -> bytes:
    """Hex-decoded ``NFE_PEPPER``, or empty bytes when unset."""
    value = (os.environ if environ is None else environ).get(PEPPER_ENV, "")
    try:
        return bytes.fromhex(value.strip())
    except ValueError:
        raise InvalidArgumentError(f"{PEPPER_ENV} is not valid hex") from None


@dataclass(frozen=True)
class AuthRecord:
    username: str
    scheme: str
    codebook_params: bytes
    dv: bytes
    salt: bytes
    digest: bytes

    def __post_init__(self):
        if not self.username:
            raise InvalidArgumentError("username must be non-empty")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}")
        if len(self.salt) != SALT_BYTES or len(self.digest) != DIGEST_BYTES:
            raise InvalidArgumentError("salt must be 16 bytes and digest 32 bytes")

    def to_bytes(self) -> bytes:
        name = self.username.encode("utf-8")
        return b"".join([
            struct.pack("<H", len(name)), name,
            bytes([SCHEMES[self.scheme]]),
            struct.pack("<I", len(self.codebook_params)), self.codebook_params,
            struct.pack("<I", len(self.dv)), self.dv,
            self.salt, self.digest,
        ])

    @classmethod
    def from_bytes(cls, data: bytes):
        try:
            pos = 0
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            username = data[pos:pos + n].decode("utf-8")
            pos += n
            scheme = _SCHEME_NAMES[data[pos]]
            pos += 1
            (n,) = struct.unpack_from("<I", data, pos)
            params = data[pos + 4:pos + 4 + n]
            pos += 4 + n
            (n,) = struct.unpack_from("<I", data, pos)
            dv = data[pos + 4:pos + 4 + n]
            pos += 4 + n
            salt = data[pos:pos + SALT_BYTES]
            digest = data[pos + SALT_BYTES:pos + SALT_BYTES + DIGEST_BYTES]
            pos += SALT_BYTES + DIGEST_BYTES
        except (struct.error, IndexError, KeyError, UnicodeDecodeError):
            raise FormatError("corrupt authentication record") from None
        if pos != len(data):
            raise FormatError("authentication record length mismatch")
        try:
            return cls(username, scheme, bytes(params), bytes(dv), bytes(salt), bytes(digest))
        except InvalidArgumentError as exc:
            raise FormatError(str(exc)) from None


@dataclass
class RecordStore:
    records: dict = field(default_factory=dict)
    version: int = STORE_VERSION

    def add(self, record):
        if record.username in self.records:
            raise ConflictError(f"user {record.username!r} is already enrolled")
        self.records[record.username] = record

    def __contains__(self, username):
        return username in self.records

    def __getitem__(self, username):
        return self.records[username]

    def __len__(self):
        return len(self.records)


def save_store(store) -> bytes:
    out = [STORE_MAGIC, struct.pack("<HI", store.version, len(store.records))]
    for name in sorted(store.records):
        blob = store.records[name].to_bytes()
        out.append(struct.pack("<I", len(blob)))
        out.append(blob)
    return b"".join(out)


def load_store(data: bytes) -> RecordStore:
    if data[:5] != STORE_MAGIC:
        raise FormatError("not a record store (bad magic)")
    try:
        version, count = struct.unpack_from("<HI", data, 5)
    except struct.error:
        raise FormatError("truncated record store header") from None
    if version != STORE_VERSION:
        raise FormatError(f"unsupported record store version {version}")
    store = RecordStore(version=version)
    pos = 11
    for _ in range(count):
        try:
            (n,) = struct.unpack_from("<I", data, pos)
        except struct.error:
            raise FormatError("truncated record store") from None
        if pos + 4 + n > len(data):
            raise FormatError("truncated record store")
        record = AuthRecord.from_bytes(data[pos + 4:pos + 4 + n])
        if record.username in store.records:
            raise FormatError(f"duplicate user {record.username!r} in store")
        store.records[record.username] = record
        pos += 4 + n
    if pos != len(data):
        raise FormatError("trailing bytes after record store")
    return store


def write_store_file(path, store):
    """Atomically replace ``path`` with the serialised store."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".nfes-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(save_store(store))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_store_file(path) -> RecordStore:
    with open(path, "rb") as fh:
        return load_store(fh.read())


@dataclass(frozen=True)
class EnrollConfig:
    """Knobs for :func:`enroll_user`.

    ``support`` (a :class:`~nfe.geometry.SupportSphere`) is required for the
    lattice scheme. ``salt`` overrides the OS-random salt, for reproducible
    evaluation runs only.
    """

    support: object = None
    quantile: float = 0.95
    radius_multiplier: float = 1.0
    code_id: int = 1
    pepper: bytes | None = None
    salt: bytes | None = None


def enroll_user(username, enrollment_vectors, expander, scheme="lattice",
                config=EnrollConfig(), store=None):
    """Build (and optionally store) the authentication record for one user."""
    if store is not None and username in store:
        raise ConflictError(f"user {username!r} is already enrolled")
    vectors = np.atleast_2d(np.asarray(enrollment_vectors, dtype=np.float64))
    if vectors.size == 0:
        raise InvalidArgumentError("at least one enrollment vector is required")
    outputs = forward_batch(expander, vectors)
    region = fit_user_region(outputs, config.quantile, user_id=username)
    salt = secrets.token_bytes(SALT_BYTES) if config.salt is None else bytes(config.salt)

    if scheme == "lattice":
        if config.support is None:
            raise InvalidArgumentError("lattice enrollment needs a support sphere")
        radius = max(RADIUS_FLOOR, config.radius_multiplier * region.radius)
        codebook = lattice.LatticeCodebook.from_radius(radius, config.support)
        center = lattice.quantize(region.center)
        try:
            sketch, _ = lattice.make_sketch(codebook, center)
        except OutOfSupportError as exc:
            raise EnrollmentError(str(exc)) from None
        params, dv = codebook.to_bytes(), sketch.to_bytes()
    elif scheme == "binary":
        center = binary.binarize(region.center)
        layout = binary.CodeLayout.for_length(center.size, config.code_id)
        sketch, _ = binary.make_binary_sketch(layout, center)
        params, dv = layout.to_bytes(), sketch.to_bytes()
    else:
        raise InvalidArgumentError(f"unknown scheme {scheme!r}")

    digest = hash_digest(canonical_serialize(center, salt, scheme), config.pepper)
    record = AuthRecord(username, scheme, params, dv, salt, digest)
    if store is not None:
        store.add(record)
    return record


def recover_from_record(record, probe_output):
    """Re-derive the center implied by a probe's expander output.

    Raises an :class:`~nfe.errors.NFEError` when the record cannot be parsed
    or the probe does not decode.
    """
    if record.scheme == "lattice":
        codebook = lattice.LatticeCodebook.from_bytes(record.codebook_params)
        sketch = lattice.LatticeSketch.from_bytes(record.dv)
        return lattice.recover_center(codebook, sketch, lattice.quantize(probe_output))
    layout = binary.CodeLayout.from_bytes(record.codebook_params)
    sketch = binary.BinarySketch.from_bytes(record.dv, layout)
    return binary.recover_binary_center(layout, sketch, binary.binarize(probe_output))


def verify_output(record, output, pepper=None) -> bool:
    """Check an already-computed expander output against a record."""
    try:
        center = recover_from_record(record, output)
        payload = canonical_serialize(center, record.salt, record.scheme)
    except (NFEError, ValueError):
        return False
    return hmac.compare_digest(hash_digest(payload, pepper), record.digest)


def verify_user(record, probe, expander, pepper=None) -> bool:
    """True (accept) iff the probe reproduces the enrolled center's digest.

    Undecodable probes and unparsable helper data are rejections, not errors.
    """
    probe = np.asarray(probe, dtype=np.float64)
    if probe.ndim != 1 or probe.size != expander.input_dim:
        raise InvalidArgumentError("probe dimension does not match the expander input")
    return verify_output(record, forward_batch(expander, probe[None, :])[0], pepper)
