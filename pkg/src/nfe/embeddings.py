"""Labeled embedding vectors: synthetic generation, file I/O and splitting.

The vectors stand in for the output of whatever classifier sits upstream
of the expander. The text format is one record per line::

    #dim=4
    alice,0.1,-0.25,0.5,1.0
    bob,...
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from ._rng import Xoshiro256
from .errors import InvalidArgumentError, ParseError


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """An immutable collection of labeled real vectors of one dimension.

    Attributes
    ----------
    user_ids : tuple of str
        Label of each row.
    vectors : numpy.ndarray
        ``(n, dim)`` float64 array, read-only.
    """

    user_ids: tuple
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2 or vectors.shape[1] == 0:
            raise InvalidArgumentError("vectors must be a 2-d array with dim >= 1")
        ids = tuple(str(u) for u in self.user_ids)
        if len(ids) != vectors.shape[0]:
            raise InvalidArgumentError("one user_id per vector required")
        if any(not u for u in ids):
            raise InvalidArgumentError("user_id must be non-empty")
        if not np.all(np.isfinite(vectors)):
            raise InvalidArgumentError("embedding values must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "user_ids", ids)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.user_ids)

    def __iter__(self):
        return iter(zip(self.user_ids, self.vectors))

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (self.user_ids == other.user_ids
                and self.vectors.shape == other.vectors.shape
                and np.array_equal(self.vectors, other.vectors))

    def users(self):
        """Distinct user ids in order of first appearance."""
        return list(dict.fromkeys(self.user_ids))

    def indices_of(self, user_id):
        return [i for i, u in enumerate(self.user_ids) if u == user_id]

    def vectors_of(self, user_id):
        return self.vectors[self.indices_of(user_id)]

    def subset(self, indices):
        indices = list(indices)
        return EmbeddingSet(tuple(self.user_ids[i] for i in indices),
                            self.vectors[indices])


def generate_synthetic(num_users, samples_per_user, dim, intra_sigma, seed):
    """Gaussian clusters around random unit-norm centers.

    Each user gets a center drawn uniformly on the unit sphere; samples are
    ``center + N(0, intra_sigma^2 I)``. Users are named ``u000``, ``u001``...
    """
    if num_users < 1 or samples_per_user < 1 or dim < 1:
        raise InvalidArgumentError("num_users, samples_per_user and dim must be >= 1")
    if not intra_sigma > 0:
        raise InvalidArgumentError("intra_sigma must be positive")
    rng = Xoshiro256(seed)
    width = max(3, len(str(num_users - 1)))
    ids, rows = [], []
    for u in range(num_users):
        center = _unit_vector(rng, dim)
        uid = f"u{u:0{width}d}"
        for _ in range(samples_per_user):
            rows.append([c + intra_sigma * rng.normal() for c in center])
            ids.append(uid)
    return EmbeddingSet(tuple(ids), np.array(rows, dtype=np.float64))


def _unit_vector(rng, dim):
    while True:
        g = [rng.normal() for _ in range(dim)]
        norm = math.sqrt(math.fsum(x * x for x in g))
        if norm > 0.0:
            return [x / norm for x in g]


def save_embedding_set(eset, stream=None):
    """Write ``eset`` in the text format; returns the text if no stream given."""
    out = io.StringIO() if stream is None else stream
    out.write(f"#dim={eset.dim}\n")
    for uid, vec in eset:
        if "," in uid or "\n" in uid or uid.startswith("#"):
            raise InvalidArgumentError(f"user_id {uid!r} cannot be written to the text format")
        out.write(uid + "," + ",".join(repr(float(v)) for v in vec) + "\n")
    if stream is None:
        return out.getvalue()
    return None


def load_embedding_set(source):
    """Parse the text format from a str, bytes, or text/binary stream."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    dim = None
    ids, rows = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if dim is None and line.startswith("#dim="):
                try:
                    dim = int(line[5:])
                except ValueError:
                    raise ParseError(f"bad dim header {line!r}", lineno) from None
                if dim < 1:
                    raise ParseError("dim must be positive", lineno)
            continue
        if dim is None:
            raise ParseError("record before '#dim=' header", lineno)
        fields = line.split(",")
        uid = fields[0].strip()
        if not uid:
            raise ParseError("empty user_id", lineno)
        if len(fields) - 1 != dim:
            raise ParseError(f"expected {dim} values, found {len(fields) - 1}", lineno)
        try:
            values = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", lineno)
        ids.append(uid)
        rows.append(values)
    if not rows:
        raise ParseError("no records")
    return EmbeddingSet(tuple(ids), np.array(rows, dtype=np.float64))


def split(eset, train_fraction, seed):
    """Per-user stratified split into (train, test).

    Each user with n samples contributes ``floor(n * train_fraction)``
    samples to train, clamped to [1, n - 1], so every user lands in both
    halves. Row order inside each half follows the original set.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidArgumentError("train_fraction must lie in (0, 1)")
    rng = Xoshiro256(seed)
    train_idx, test_idx = [], []
    for user in eset.users():
        idx = eset.indices_of(user)
        n = len(idx)
        if n < 2:
            raise InvalidArgumentError(f"user {user!r} has fewer than 2 samples")
        # small epsilon keeps 12 * (10/12) from flooring to 9
        n_train = min(n - 1, max(1, math.floor(n * train_fraction + 1e-9)))
        chosen = set(rng.sample(n, n_train))
        for k, i in enumerate(idx):
            (train_idx if k in chosen else test_idx).append(i)
    train_idx.sort()
    test_idx.sort()
    return eset.subset(train_idx), eset.subset(test_idx)
