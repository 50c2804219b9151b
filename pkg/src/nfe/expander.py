"""The expander: a small ReLU network trained with the triplet loss.

Outputs are L2-normalised so every user's cluster lives on the unit
sphere. Gradients are computed analytically by backpropagation.
"""

from __future__ import annotations

import logging
import math
import struct
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._rng import Xoshiro256
from .embeddings import EmbeddingSet
from .errors import DegenerateOutputWarning, FormatError, InvalidArgumentError

log = logging.getLogger(__name__)

PARAMS_MAGIC = b"NFEX1"


@dataclass(frozen=True, eq=False)
class ExpanderParams:
    """Weights and biases of the expander MLP.

    ``weights[i]`` has shape ``(layer_dims[i + 1], layer_dims[i])``.
    """

    layer_dims: tuple
    weights: tuple
    biases: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise InvalidArgumentError("need at least two positive layer dims")
        weights = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
            raise InvalidArgumentError("one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise InvalidArgumentError(f"layer {i} shape mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidArgumentError(f"layer {i} has non-finite entries")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def __eq__(self, other):
        if not isinstance(other, ExpanderParams):
            return NotImplemented
        return (self.layer_dims == other.layer_dims
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases)))

    def flatten(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    @classmethod
    def unflatten(cls, layer_dims, flat):
        flat = np.asarray(flat, dtype=np.float64)
        weights, biases, pos = [], [], 0
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(flat[pos:pos + d_out * d_in].reshape(d_out, d_in))
            pos += d_out * d_in
            biases.append(flat[pos:pos + d_out])
            pos += d_out
        return cls(tuple(layer_dims), tuple(weights), tuple(biases))


class Triplet(NamedTuple):
    anchor: int
    positive: int
    negative: int


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.2
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 32
    hard_fraction: float = 0.5
    seed: int = 0
    # None means one triplet per embedding per epoch
    triplets_per_epoch: int | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidArgumentError("alpha must be positive")
        if self.learning_rate < 0:
            raise InvalidArgumentError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidArgumentError("momentum must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgumentError("epochs and batch_size must be positive")
        if not 0.0 <= self.hard_fraction <= 1.0:
            raise InvalidArgumentError("hard_fraction must lie in [0, 1]")
        if self.triplets_per_epoch is not None and self.triplets_per_epoch < 1:
            raise InvalidArgumentError("triplets_per_epoch must be positive")


def init_params(layer_dims: Sequence[int], seed: int) -> ExpanderParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise InvalidArgumentError("need at least two positive layer dims")
    rng = Xoshiro256(seed)
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(d_in)
        w = [rng.uniform(-bound, bound) for _ in range(d_out * d_in)]
        weights.append(np.array(w).reshape(d_out, d_in))
        biases.append(np.zeros(d_out))
    return ExpanderParams(dims, tuple(weights), tuple(biases))


def _forward_cache(params, X):
    """Run the network on rows of X, keeping what backprop needs."""
    acts = [X]
    pre = []
    h = X
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < n_layers - 1 else z
        acts.append(h)
    z = pre[-1]
    norms = np.sqrt(np.einsum("ij,ij->i", z, z))
    degenerate = norms == 0.0
    safe = np.where(degenerate, 1.0, norms)
    y = z / safe[:, None]
    if np.any(degenerate):
        y[degenerate] = 0.0
        y[degenerate, 0] = 1.0
        warnings.warn("expander output was the zero vector; substituted e1",
                      DegenerateOutputWarning, stacklevel=3)
    return acts, pre, y, safe, degenerate


def forward_batch(params: ExpanderParams, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.input_dim:
        raise InvalidArgumentError(
            f"input dim {X.shape[1]} does not match expander input dim {params.input_dim}")
    return _forward_cache(params, X)[2]


def forward(params: ExpanderParams, x) -> np.ndarray:
    """Map one vector through the expander; the result has unit L2 norm."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError("forward expects a single vector")
    return forward_batch(params, x[None, :])[0]


def triplet_loss(fa, fp, fn_, alpha):
    """max(0, |fa - fp|^2 - |fa - fn|^2 + alpha)."""
    fa, fp, fn_ = (np.asarray(v, dtype=np.float64) for v in (fa, fp, fn_))
    if not fa.shape == fp.shape == fn_.shape or fa.ndim != 1:
        raise InvalidArgumentError("triplet vectors must share one dimension")
    d_ap = float(np.sum((fa - fp) ** 2))
    d_an = float(np.sum((fa - fn_) ** 2))
    return max(0.0, d_ap - d_an + alpha)


def _backward(params, acts, pre, y, norms, degenerate, grad_y):
    gz = (grad_y - y * np.einsum("ij,ij->i", y, grad_y)[:, None]) / norms[:, None]
    gz[degenerate] = 0.0
    n_layers = len(params.weights)
    d_w = [None] * n_layers
    d_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        d_w[i] = gz.T @ acts[i]
        d_b[i] = gz.sum(axis=0)
        if i > 0:
            gz = (gz @ params.weights[i]) * (pre[i - 1] > 0.0)
    return d_w, d_b


def batch_gradient(params, eset, triplets, alpha):
    """Gradient of the mean triplet loss over ``triplets``.

    Returns ``(grad, mean_loss)`` where ``grad`` is an :class:`ExpanderParams`
    holding the partial derivatives. At the hinge kink the subgradient is 0.
    """
    if len(triplets) == 0:
        raise InvalidArgumentError("empty triplet batch")
    if eset.dim != params.input_dim:
        raise InvalidArgumentError("embedding dim does not match expander input dim")
    idx = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    t = idx.shape[0]
    X = eset.vectors[np.concatenate([idx[:, 0], idx[:, 1], idx[:, 2]])]
    acts, pre, y, norms, degenerate = _forward_cache(params, X)
    ya, yp, yn = y[:t], y[t:2 * t], y[2 * t:]
    d_ap = np.sum((ya - yp) ** 2, axis=1)
    d_an = np.sum((ya - yn) ** 2, axis=1)
    margin = d_ap - d_an + alpha
    active = (margin > 0.0).astype(np.float64)[:, None] / t
    loss = float(np.sum(np.maximum(margin, 0.0)) / t)

    grad_y = np.concatenate([
        2.0 * (yn - yp) * active,
        -2.0 * (ya - yp) * active,
        2.0 * (ya - yn) * active,
    ])
    d_w, d_b = _backward(params, acts, pre, y, norms, degenerate, grad_y)
    return ExpanderParams(params.layer_dims, tuple(d_w), tuple(d_b)), loss


class MinedTriplets(list):
    """List of :class:`Triplet` plus mining bookkeeping.

    ``hard_mask[i]`` tells whether item i was drawn from the violating pool;
    ``shortfall`` counts requested hard triplets that did not exist.
    """

    def __init__(self, triplets, hard_mask, shortfall):
        super().__init__(triplets)
        self.hard_mask = tuple(hard_mask)
        self.shortfall = shortfall

    @property
    def n_hard(self):
        return sum(self.hard_mask)


def _groups(eset):
    labels = {}
    for i, u in enumerate(eset.user_ids):
        labels.setdefault(u, []).append(i)
    return labels


def hard_triplet_pool(params, eset, alpha):
    """Every (a, p, n) with |f(a)-f(n)|^2 < |f(a)-f(p)|^2 + alpha, as an (k, 3) array."""
    y = forward_batch(params, eset.vectors)
    sq = np.sum(y * y, axis=1)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (y @ y.T), 0.0)
    user_arr = np.array(eset.user_ids, dtype=object)
    chunks = []
    for members in _groups(eset).values():
        if len(members) < 2:
            continue
        members = np.array(members)
        negatives = np.flatnonzero(user_arr != user_arr[members[0]])
        for a in members:
            positives = members[members != a]
            viol = dist[a, negatives][None, :] < dist[a, positives][:, None] + alpha
            pi, ni = np.nonzero(viol)
            if pi.size:
                chunks.append(np.column_stack([np.full(pi.size, a), positives[pi], negatives[ni]]))
    if not chunks:
        return np.empty((0, 3), dtype=np.int64)
    return np.concatenate(chunks).astype(np.int64)


def mine_triplets(params, eset, count, hard_fraction, seed, alpha=0.2):
    """Mix of margin-violating ("hard") and uniform random ("easy") triplets.

    ``round(count * hard_fraction)`` triplets are sampled without replacement
    from the hard pool under the current params; the rest, plus any shortfall,
    are uniform random valid triplets. The result is shuffled.
    """
    groups = _groups(eset)
    if len(groups) < 2:
        raise InvalidArgumentError("triplet mining needs at least two users")
    if count < 1:
        raise InvalidArgumentError("count must be positive")
    if not 0.0 <= hard_fraction <= 1.0:
        raise InvalidArgumentError("hard_fraction must lie in [0, 1]")
    anchors = [i for members in groups.values() if len(members) >= 2 for i in members]
    if not anchors:
        raise InvalidArgumentError("no user has two samples to form a positive pair")

    rng = Xoshiro256(seed)
    want_hard = int(math.floor(count * hard_fraction + 0.5))
    picked, mask = [], []
    if want_hard:
        pool = hard_triplet_pool(params, eset, alpha)
        take = min(want_hard, len(pool))
        for k in rng.sample(len(pool), take):
            picked.append(Triplet(*(int(v) for v in pool[k])))
            mask.append(True)
    shortfall = want_hard - len(picked)
    if shortfall:
        log.info("hard triplet shortfall: %d of %d requested", shortfall, want_hard)

    n = len(eset)
    while len(picked) < count:
        a = anchors[rng.randbelow(len(anchors))]
        members = groups[eset.user_ids[a]]
        p = a
        while p == a:
            p = members[rng.randbelow(len(members))]
        while True:
            neg = rng.randbelow(n)
            if eset.user_ids[neg] != eset.user_ids[a]:
                break
        picked.append(Triplet(a, p, neg))
        mask.append(False)

    order = list(range(len(picked)))
    rng.shuffle(order)
    return MinedTriplets([picked[i] for i in order], [mask[i] for i in order], shortfall)


def train(params, eset, config):
    """Mini-batch SGD with momentum on the triplet loss.

    Every epoch mines a fresh triplet set under the current params (with the
    same mining seed, so a zero learning rate reproduces the same set), walks
    it in consecutive batches and records the mean per-triplet loss.

    Returns ``(params, history)``.
    """
    if eset.dim != params.input_dim:
        raise InvalidArgumentError("embedding dim does not match expander input dim")
    count = config.triplets_per_epoch or len(eset)
    theta = params.flatten()
    velocity = np.zeros_like(theta)
    current = params
    history = []
    for epoch in range(config.epochs):
        triplets = mine_triplets(current, eset, count, config.hard_fraction,
                                 config.seed, alpha=config.alpha)
        total = 0.0
        for start in range(0, len(triplets), config.batch_size):
            batch = triplets[start:start + config.batch_size]
            grad, loss = batch_gradient(current, eset, batch, config.alpha)
            total += loss * len(batch)
            velocity = config.momentum * velocity - config.learning_rate * grad.flatten()
            theta = theta + velocity
            current = ExpanderParams.unflatten(params.layer_dims, theta)
        history.append(total / len(triplets))
        log.debug("epoch %d loss %.6f", epoch, history[-1])
    return current, history


def save_params(params) -> bytes:
    out = [PARAMS_MAGIC, struct.pack("<I", len(params.layer_dims))]
    out += [struct.pack("<I", d) for d in params.layer_dims]
    for w, b in zip(params.weights, params.biases):
        out.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(out)


def load_params(data: bytes) -> ExpanderParams:
    if data[:5] != PARAMS_MAGIC:
        raise FormatError("not an expander parameter file (bad magic)")
    try:
        (count,) = struct.unpack_from("<I", data, 5)
        dims = struct.unpack_from(f"<{count}I", data, 9)
    except struct.error:
        raise FormatError("truncated expander parameter header") from None
    pos = 9 + 4 * count
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        end = pos + 8 * (d_out * d_in + d_out)
        if end > len(data):
            raise FormatError("truncated expander parameter file")
        w = np.frombuffer(data, dtype="<f8", count=d_out * d_in, offset=pos)
        b = np.frombuffer(data, dtype="<f8", count=d_out, offset=pos + 8 * d_out * d_in)
        weights.append(w.reshape(d_out, d_in).astype(np.float64))
        biases.append(b.astype(np.float64))
        pos = end
    if pos != len(data):
        raise FormatError("trailing bytes after expander parameters")
    try:
        return ExpanderParams(dims, tuple(weights), tuple(biases))
    except InvalidArgumentError as exc:
        raise FormatError(str(exc)) from None


class Expander(BaseEstimator, TransformerMixin):
    """scikit-learn transformer wrapping :func:`init_params` and :func:`train`.

    Parameters
    ----------
    hidden_dims : tuple of int
        Widths of the ReLU hidden layers.
    n_components : int
        Output dimension (outputs are unit-norm).
    alpha, learning_rate, momentum, epochs, batch_size, hard_fraction,
    triplets_per_epoch
        See :class:`TrainConfig`.
    random_state : int
        Seed for weight initialisation and triplet mining.
    """

    def __init__(self, hidden_dims=(12,), n_components=8, alpha=0.2,
                 learning_rate=0.05, momentum=0.9, epochs=50, batch_size=32,
                 hard_fraction=0.5, triplets_per_epoch=None, random_state=0):
        self.hidden_dims = hidden_dims
        self.n_components = n_components
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.hard_fraction = hard_fraction
        self.triplets_per_epoch = triplets_per_epoch
        self.random_state = random_state

    def _config(self):
        return TrainConfig(alpha=self.alpha, learning_rate=self.learning_rate,
                           momentum=self.momentum, epochs=self.epochs,
                           batch_size=self.batch_size, hard_fraction=self.hard_fraction,
                           seed=self.random_state, triplets_per_epoch=self.triplets_per_epoch)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        config = self._config()
        eset = EmbeddingSet(tuple(str(v) for v in y), X)
        dims = (X.shape[1], *self.hidden_dims, self.n_components)
        self.params_, self.loss_history_ = train(init_params(dims, self.random_state), eset, config)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return forward_batch(self.params_, X)
