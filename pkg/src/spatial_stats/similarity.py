"""
Vector similarity between per-unit fields: cosine angle in degrees and Pearson r
"""

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Tuple, Union

import numpy as np
from scipy import stats

from errors import DegenerateFieldError, InsufficientDataError

logger = logging.getLogger(__name__)

Field = Union[Mapping[str, float], np.ndarray, list, tuple]

MIN_PAIRS = 3

# spread below this fraction of the magnitude counts as constant (aggregation round-off)
CONSTANT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CorrelationCoefficient:
    r: float
    n: int
    p_value: float = float('nan')

    def __post_init__(self):
        if not -1.0 <= self.r <= 1.0:
            raise ValueError(f"Correlation out of range: {self.r}")
        if self.n < MIN_PAIRS:
            raise ValueError(f"A correlation needs at least {MIN_PAIRS} pairs, got {self.n}")


def _constant(a: np.ndarray) -> bool:
    return bool(np.ptp(a) <= CONSTANT_TOLERANCE * np.max(np.abs(a)))


def _aligned(u: Field, v: Field) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(u, Mapping) or isinstance(v, Mapping):
        if not (isinstance(u, Mapping) and isinstance(v, Mapping)):
            raise TypeError("Both fields must be mappings or both arrays")
        if set(u) != set(v):
            only_u, only_v = sorted(set(u) - set(v)), sorted(set(v) - set(u))
            raise ValueError(f"Index sets differ: {only_u[:3]} only in first, {only_v[:3]} only in second")
        keys = sorted(u)
        return (np.array([u[k] for k in keys], dtype=float),
                np.array([v[k] for k in keys], dtype=float))
    a, b = np.asarray(u, dtype=float).ravel(), np.asarray(v, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"Vectors differ in length: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def cosine_degrees(u: Field, v: Field) -> float:
    """
    Angle between two same-indexed vectors, in degrees within [0, 180]

    0 means identical orientation, 90 orthogonal, 180 opposite. Computed as
    2 * atan2(|û - v̂|, |û + v̂|), which equals arccos of the clamped cosine
    and stays exact at the three anchors.
    """
    a, b = _aligned(u, v)
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ValueError("Cosine similarity undefined for a zero-norm vector")
    ua, ub = a / norm_a, b / norm_b
    angle = math.degrees(2.0 * math.atan2(np.linalg.norm(ua - ub), np.linalg.norm(ua + ub)))
    return min(max(angle, 0.0), 180.0)


def pearson(x: Field, y: Field) -> CorrelationCoefficient:
    """
    Product-moment correlation over the units both fields define

    Mapping inputs are paired by key; pairs with a missing or non-finite value
    on either side are dropped.

    Raises:
        InsufficientDataError: fewer than 3 pairs remain
        DegenerateFieldError: zero variance in x or y
    """
    if isinstance(x, Mapping) and isinstance(y, Mapping):
        keys = sorted(set(x) & set(y))
        a = np.array([x[k] for k in keys], dtype=float)
        b = np.array([y[k] for k in keys], dtype=float)
    else:
        a, b = _aligned(x, y)
    keep = np.isfinite(a) & np.isfinite(b)
    a, b = a[keep], b[keep]
    if len(a) < MIN_PAIRS:
        raise InsufficientDataError(f"Pearson correlation needs >= {MIN_PAIRS} pairs, got {len(a)}")
    if _constant(a) or _constant(b):
        raise DegenerateFieldError("zero variance in a correlated variable")
    result = stats.pearsonr(a, b)
    r = float(np.clip(result[0], -1.0, 1.0))
    return CorrelationCoefficient(r=r, n=int(len(a)), p_value=float(result[1]))
