"""Decision regions, the support sphere, and entropy bounds."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .lattice import decode_nearest, quantize

RADIUS_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class DecisionRegion:
    user_id: str
    center: np.ndarray
    radius: float


@dataclass(frozen=True, eq=False)
class SupportSphere:
    center: np.ndarray
    radius: float


def _as_points(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise InvalidArgumentError("at least one point is required")
    if pts.ndim != 2:
        raise InvalidArgumentError("points must share a common dimension")
    return pts


def empirical_quantile(values, q):
    """The ceil(q*n)-th smallest value (inverted-CDF quantile)."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    k = max(0, min(values.size - 1, math.ceil(q * values.size - 1e-9) - 1))
    return float(values[k])


def fit_user_region(points, quantile=0.95, user_id=""):
    """Mean center; radius is the ``quantile`` of point-to-center distances."""
    pts = _as_points(points)
    if not 0.0 < quantile <= 1.0:
        raise InvalidArgumentError("quantile must lie in (0, 1]")
    center = pts.mean(axis=0)
    dists = np.linalg.norm(pts - center, axis=1)
    radius = max(RADIUS_FLOOR, empirical_quantile(dists, quantile))
    return DecisionRegion(user_id, center, radius)


def fit_support_sphere(points, inflation=0.1):
    """Sphere around the global mean reaching the farthest point, inflated.

    This is not the minimum enclosing ball; the inflation absorbs the gap.
    """
    pts = _as_points(points)
    if inflation < 0:
        raise InvalidArgumentError("inflation must be non-negative")
    center = pts.mean(axis=0)
    base = float(np.max(np.linalg.norm(pts - center, axis=1)))
    return SupportSphere(center, base * (1.0 + inflation))


def sphere_packing_entropy(dim, R, r):
    """Upper bound ``dim * log2(R / r)`` in bits."""
    if dim < 1 or not r > 0 or R < r:
        raise InvalidArgumentError("need dim >= 1 and R >= r > 0")
    return dim * math.log2(R / r)


def sphere_packing_count(dim, R, r):
    """``(R / r) ** dim``: how many radius-r balls the bound allows."""
    if dim < 1 or not r > 0 or R < r:
        raise InvalidArgumentError("need dim >= 1 and R >= r > 0")
    return (R / r) ** dim


def shannon_entropy(counts):
    counts = [c for c in counts if c > 0]
    total = sum(counts)
    return max(0.0, -sum((c / total) * math.log2(c / total) for c in counts))


def histogram_entropy(points, codebook):
    """Entropy in bits of the codeword histogram of ``points``."""
    pts = _as_points(points)
    if pts.shape[1] != codebook.dim:
        raise InvalidArgumentError("points do not match the codebook dimension")
    hist = Counter(tuple(decode_nearest(codebook, quantize(p)).tolist()) for p in pts)
    return shannon_entropy(hist.values())
