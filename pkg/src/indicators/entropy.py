"""
Visit distributions and temporally-uncorrelated mobility entropy (bits)
"""

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import entropy as shannon_entropy

from errors import InsufficientDataError
from ingest.records import CdrRecord

PROBABILITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class VisitDistribution:
    user_id: str
    probs: Mapping[str, float]
    n_events: int

    def __post_init__(self):
        if not self.probs:
            raise InsufficientDataError(f"User {self.user_id} has an empty visit distribution")
        if any(p <= 0 for p in self.probs.values()):
            raise ValueError(f"Non-positive visit probability for user {self.user_id}")
        if abs(sum(self.probs.values()) - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"Visit probabilities of user {self.user_id} do not sum to 1")

    @property
    def support(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.array([self.probs[c] for c in sorted(self.probs)], dtype=float)


@dataclass(frozen=True)
class EntropyValue:
    user_id: str
    H: float
    support: int = 1

    @property
    def normalized(self) -> float:
        """H / log2(k); 0 for a single-tower user"""
        return self.H / math.log2(self.support) if self.support > 1 else 0.0


def visit_distribution(events: Sequence[CdrRecord], user_id: Optional[str] = None) -> VisitDistribution:
    """p_i = events at tower i / total events"""
    if not events:
        raise InsufficientDataError(f"User {user_id or '?'} has no in-window events")
    users = {e.user_id for e in events}
    if len(users) > 1:
        raise ValueError(f"Events of several users passed to visit_distribution: {sorted(users)[:3]}")
    cells, counts = np.unique(np.array([e.cell_id for e in events]), return_counts=True)
    total = counts.sum()
    probs = {str(c): n / total for c, n in zip(cells, counts)}
    return VisitDistribution(user_id if user_id is not None else users.pop(), probs, int(total))


def mobility_entropy(dist: VisitDistribution) -> EntropyValue:
    """H = -sum p_i log2 p_i"""
    p = dist.as_array()
    H = float(shannon_entropy(p, base=2)) if len(p) > 1 else 0.0
    H = min(max(H, 0.0), math.log2(len(p)))
    return EntropyValue(dist.user_id, H, len(p))


def random_entropy(dist: VisitDistribution) -> float:
    """log2 of the number of distinct visited towers, the upper bound of H"""
    return math.log2(dist.support)
