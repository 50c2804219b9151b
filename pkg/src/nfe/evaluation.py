"""FAR/FRR sweeps over the decision radius and entropy-based security reports."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import Xoshiro256
from .errors import InvalidArgumentError
from .expander import forward_batch
from .geometry import (fit_support_sphere, fit_user_region, histogram_entropy,
                       sphere_packing_entropy)
from .lattice import LatticeCodebook
from .records import SALT_BYTES, EnrollConfig, enroll_user, verify_output

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    multipliers: list
    frr: list
    far: list
    # genuine rejection rate on the enrollment samples themselves
    frr_train: list
    entropy_upper_bits: float
    entropy_lower_bits: float
    support_radius: float
    user_radii: dict = field(default_factory=dict)
    scheme: str = "lattice"
    seed: int = 0

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["multiplier", "frr", "far"])
        for m, frr, far in zip(self.multipliers, self.frr, self.far):
            writer.writerow([repr(float(m)), repr(float(frr)), repr(float(far))])
        return out.getvalue()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _salt_stream(rng):
    return bytes(rng.randbelow(256) for _ in range(SALT_BYTES))


def security_report(all_embeddings, expander, user_radius_stats, inflation=0.1):
    """Entropy bounds for a population passed through ``expander``.

    Returns ``(entropy_upper_bits, entropy_lower_bits, support_radius)``.
    The upper bound uses the median user radius; the lower bound is the
    codeword-histogram entropy of all outputs under spacing ``2 * median``.
    """
    if len(all_embeddings) == 0:
        raise InvalidArgumentError("empty embedding set")
    radii = list(user_radius_stats.values()) if isinstance(user_radius_stats, dict) \
        else list(user_radius_stats)
    if not radii:
        raise InvalidArgumentError("need at least one user radius")
    outputs = forward_batch(expander, all_embeddings.vectors)
    support = fit_support_sphere(outputs, inflation)
    r = float(np.median(radii))
    # a support smaller than one decision region holds a single region: 0 bits
    upper = sphere_packing_entropy(expander.output_dim, max(support.radius, r), r)
    lower = histogram_entropy(outputs, LatticeCodebook.from_radius(r, support))
    return upper, lower, support.radius


def far_frr_sweep(train, test, expander, radius_multipliers, scheme="lattice", seed=0,
                  quantile=0.95, inflation=0.1, pepper=None):
    """Enroll every training user per multiplier and score all test probes.

    Genuine trials pair each test probe with its own user's record; imposter
    trials pair it with every other user's record (exhaustive).
    """
    if len(test) == 0:
        raise InvalidArgumentError("empty test set")
    users = train.users()
    missing = set(test.users()) - set(users)
    if missing:
        raise InvalidArgumentError(f"test users missing from train: {sorted(missing)}")
    multipliers = [float(m) for m in radius_multipliers]
    if not multipliers or any(not m > 0 for m in multipliers):
        raise InvalidArgumentError("radius multipliers must be positive")

    train_out = forward_batch(expander, train.vectors)
    test_out = forward_batch(expander, test.vectors)
    support = fit_support_sphere(train_out, inflation)
    radii = {u: fit_user_region(train_out[train.indices_of(u)], quantile).radius for u in users}

    rng = Xoshiro256(seed)
    frr, far, frr_train = [], [], []
    for m in multipliers:
        config_base = dict(support=support, quantile=quantile, radius_multiplier=m, pepper=pepper)
        records = {u: enroll_user(u, train.vectors_of(u), expander, scheme,
                                  EnrollConfig(salt=_salt_stream(rng), **config_base))
                   for u in users}
        rejected = accepted = imposters = 0
        for uid, out in zip(test.user_ids, test_out):
            for other, record in records.items():
                ok = verify_output(record, out, pepper)
                if other == uid:
                    rejected += not ok
                else:
                    imposters += 1
                    accepted += ok
        train_rejected = sum(not verify_output(records[u], out, pepper)
                             for u, out in zip(train.user_ids, train_out))
        frr.append(rejected / len(test))
        far.append(accepted / imposters if imposters else 0.0)
        frr_train.append(train_rejected / len(train))
        log.info("multiplier %.4g: frr %.4f far %.4f", m, frr[-1], far[-1])

    upper, lower, support_radius = security_report(train, expander, radii, inflation)
    return EvalReport(multipliers, frr, far, frr_train, upper, lower, support_radius,
                      radii, scheme, int(seed))
