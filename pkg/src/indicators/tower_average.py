"""
Per-tower averages of user indicators, keyed by the users' home towers
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, Mapping, Tuple

import pandas as pd

from home_detection.heuristics import HomeAssignment


@dataclass(frozen=True)
class TowerIndicator:
    values: Mapping[str, Tuple[float, int]]

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.values))

    def __len__(self) -> int:
        return len(self.values)

    def mean(self, cell_id: str) -> float:
        return self.values[cell_id][0]

    def count(self, cell_id: str) -> int:
        return self.values[cell_id][1]

    def means(self) -> Dict[str, float]:
        return {c: self.values[c][0] for c in self}

    def counts(self) -> Dict[str, float]:
        return {c: float(self.values[c][1]) for c in self}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(c, *self.values[c]) for c in self], columns=['cell_id', 'mean', 'count'])


def average_by_home(values: Mapping[str, float], homes: Iterable[HomeAssignment],
                    qualifying_only: bool = True) -> TowerIndicator:
    """Mean indicator value over the users homed at each tower; towers without users are omitted"""
    rows = [(a.home_cell, values[a.user_id]) for a in homes
            if a.home_cell is not None and a.user_id in values and (a.qualifies or not qualifying_only)]
    if not rows:
        return TowerIndicator({})
    frame = pd.DataFrame(rows, columns=['cell_id', 'value'])
    grouped = frame.groupby('cell_id', sort=True)['value'].agg(['mean', 'count'])
    return TowerIndicator({str(c): (float(r['mean']), int(r['count'])) for c, r in grouped.iterrows()})
