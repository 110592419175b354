"""
Per-tower detected-home population vectors
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from errors import InvariantViolation
from home_detection.heuristics import HomeAssignment
from ingest.records import TowerRegistry

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PopulationVector:
    """Count of qualifying users whose detected home is each tower"""
    counts: Mapping[str, int]
    heuristic: Optional[str] = None

    def __post_init__(self):
        negative = [c for c, n in self.counts.items() if n < 0]
        if negative:
            raise ValueError(f"Negative home counts for {negative[:5]}")

    @property
    def total(self) -> int:
        return int(sum(self.counts.values()))

    def __getitem__(self, cell_id: str) -> int:
        return self.counts[cell_id]

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.counts))

    def __len__(self) -> int:
        return len(self.counts)

    def __add__(self, other: 'PopulationVector') -> 'PopulationVector':
        if set(self.counts) != set(other.counts):
            raise ValueError("Population vectors cover different towers")
        heuristic = self.heuristic if self.heuristic == other.heuristic else None
        return PopulationVector({c: self.counts[c] + other.counts[c] for c in self.counts}, heuristic)

    def as_array(self, order: Optional[Sequence[str]] = None) -> np.ndarray:
        order = list(self) if order is None else order
        return np.array([self.counts[c] for c in order], dtype=float)

    def as_mapping(self) -> Dict[str, float]:
        return {c: float(self.counts[c]) for c in self}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(c, self.counts[c]) for c in self], columns=['cell_id', 'count'])


def population_vector(assignments: Iterable[HomeAssignment],
                      registry: Union[TowerRegistry, Iterable[str]]) -> PopulationVector:
    """
    Count qualifying users with a detected home per tower

    Towers without homes are present with count 0. Assignments must come from a
    single heuristic.
    """
    cell_ids = registry.cell_ids if isinstance(registry, TowerRegistry) else tuple(sorted(registry))
    counts = dict.fromkeys(cell_ids, 0)
    heuristics = set()
    assigned = 0
    for assignment in assignments:
        heuristics.add(assignment.heuristic)
        if not assignment.qualifies or assignment.home_cell is None:
            continue
        if assignment.home_cell not in counts:
            raise KeyError(f"Home cell {assignment.home_cell!r} of user {assignment.user_id} "
                           f"is not in the tower registry")
        counts[assignment.home_cell] += 1
        assigned += 1
    if len(heuristics) > 1:
        raise ValueError(f"Assignments mix heuristics {sorted(heuristics)}")

    vector = PopulationVector(counts, heuristics.pop() if heuristics else None)
    if vector.total != assigned:
        raise InvariantViolation(f"Population vector total {vector.total} != {assigned} assigned users")
    logger.debug(f"Population vector {vector.heuristic}: {assigned} homes over "
                 f"{sum(1 for n in counts.values() if n)} towers")
    return vector
