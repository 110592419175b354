"""
Inter-heuristic agreement and per-user consensus
"""

import logging
from collections import Counter
from typing import Dict, Iterable, Mapping

import numpy as np
import pandas as pd

from home_detection.heuristics import HomeAssignment

logger = logging.getLogger(__name__)


def _by_user(per_heuristic: Mapping[str, Iterable[HomeAssignment]]) -> Dict[str, Dict[str, HomeAssignment]]:
    tables = {name: {a.user_id: a for a in assignments} for name, assignments in per_heuristic.items()}
    universes = {name: frozenset(table) for name, table in tables.items()}
    if len(set(universes.values())) > 1:
        raise ValueError("Heuristic assignment sets cover different users")
    return tables


def agreement_matrix(per_heuristic: Mapping[str, Iterable[HomeAssignment]]) -> pd.DataFrame:
    """
    Fraction of qualifying users with the same home under each pair of heuristics

    Returns a square DataFrame indexed by heuristic name (in the given order).
    Entries are NaN when no user qualifies under both heuristics; the diagonal is 1.
    """
    tables = _by_user(per_heuristic)
    names = list(tables)
    users = sorted(next(iter(tables.values()), {}))
    matrix = pd.DataFrame(np.eye(len(names)), index=names, columns=names)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            both = [u for u in users if tables[a][u].qualifies and tables[b][u].qualifies]
            if both:
                same = sum(1 for u in both if tables[a][u].home_cell == tables[b][u].home_cell)
                value = same / len(both)
            else:
                value = float('nan')
            matrix.loc[a, b] = matrix.loc[b, a] = value
    return matrix


def heuristic_consensus(per_heuristic: Mapping[str, Iterable[HomeAssignment]]) -> pd.DataFrame:
    """
    Per-user spread of detected homes across heuristics

    ``n_homes`` counts distinct detected homes; ``consensus_cell`` is the most
    frequent one (smallest cell_id on ties); users with ``n_homes > 1`` are
    flagged ``vulnerable``. Only users qualifying under every heuristic appear.
    """
    tables = _by_user(per_heuristic)
    users = sorted(next(iter(tables.values()), {}))
    records = []
    for user in users:
        assignments = [table[user] for table in tables.values()]
        if not all(a.qualifies for a in assignments):
            continue
        homes = Counter(a.home_cell for a in assignments if a.home_cell is not None)
        if homes:
            top = max(homes.values())
            consensus = min(c for c, n in homes.items() if n == top)
            share = top / len(assignments)
        else:
            consensus, share = '', 0.0
        records.append((user, len(homes), consensus, share, len(homes) > 1))
    frame = pd.DataFrame(records, columns=['user_id', 'n_homes', 'consensus_cell', 'consensus_share',
                                           'vulnerable'])
    if len(frame):
        logger.info(f"Home consensus: {int(frame['vulnerable'].sum())} of {len(frame)} users "
                    f"have heuristic-dependent homes")
    return frame
