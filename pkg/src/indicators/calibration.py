"""
Density-calibrated baseline and Corrected Mobility Entropy

Users are bucketed by log10 of their home tower's density. The baseline Ĥ(d) is
the mean entropy of each bucket and CME = H - Ĥ(bin(d)), the residual left after
removing the density trend.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Tuple, Union

import numpy as np
import pandas as pd

from errors import CalibrationError
from geometry.density import DensityMap
from home_detection.heuristics import HomeAssignment
from indicators.entropy import EntropyValue

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationTable:
    """Bins over log10(density): [lo, hi) with the last bin closed"""
    edges: Tuple[float, ...]
    means: Tuple[float, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        if len(self.edges) != len(self.means) + 1 or len(self.means) != len(self.counts):
            raise ValueError("CalibrationTable edges/means/counts are inconsistent")

    def __len__(self) -> int:
        return len(self.means)

    def bin_of(self, log_density: float) -> Tuple[int, bool]:
        """Bin index for log10(d) and whether it was clamped into the table range"""
        if not self.means:
            raise CalibrationError("Calibration table is empty")
        clamped = bool(log_density < self.edges[0] or log_density > self.edges[-1])
        index = int(np.searchsorted(self.edges, log_density, side='right')) - 1
        return min(max(index, 0), len(self.means) - 1), clamped

    def baseline(self, density: float) -> float:
        return self.means[self.bin_of(math.log10(density))[0]]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'bin_lo': self.edges[:-1], 'bin_hi': self.edges[1:],
                             'H_mean': self.means, 'count': self.counts})


@dataclass(frozen=True)
class CmeValue:
    user_id: str
    value: float
    bin: int
    clamped: bool


def _initial_edges(x: np.ndarray, bins: int) -> np.ndarray:
    distinct = np.unique(x)
    if len(distinct) == 1:
        return np.array([distinct[0], distinct[0]])
    if len(distinct) <= bins:
        # one bin per point mass, edges at midpoints
        midpoints = (distinct[:-1] + distinct[1:]) / 2.0
        return np.concatenate([[distinct[0]], midpoints, [distinct[-1]]])
    return np.unique(np.quantile(x, np.linspace(0.0, 1.0, bins + 1)))


def _assign(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    index = np.searchsorted(edges, x, side='right') - 1
    return np.clip(index, 0, len(edges) - 2)


def _merge_thin(edges: np.ndarray, counts: np.ndarray, min_users: int) -> np.ndarray:
    """Merge bins rightward until each holds min_users; a thin remainder joins its left neighbour"""
    n_bins = len(counts)
    groups: List[Tuple[int, int]] = []
    start, accumulated = 0, 0
    for k in range(n_bins):
        accumulated += counts[k]
        if accumulated >= min_users:
            groups.append((start, k + 1))
            start, accumulated = k + 1, 0
    if start < n_bins:
        if groups:
            groups[-1] = (groups[-1][0], n_bins)
        else:
            groups.append((0, n_bins))
    return np.array([edges[lo] for lo, _ in groups] + [edges[n_bins]])


def _user_values(entropies: Union[Iterable[EntropyValue], Mapping[str, float]]) -> Dict[str, float]:
    if isinstance(entropies, Mapping):
        return {str(u): float(h) for u, h in entropies.items()}
    return {e.user_id: e.H for e in entropies}


def calibrate_baseline(entropies: Union[Iterable[EntropyValue], Mapping[str, float]],
                       homes: Iterable[HomeAssignment], density: DensityMap,
                       bins: int = 10, min_users: int = 50) -> CalibrationTable:
    """
    Per-bin mean entropy over log10(home density)

    Args:
        entropies: per-user entropy values
        homes: home assignments; only qualifying users with a home take part
        density: tower density map
        bins: requested number of quantile bins
        min_users: minimum users per bin (and overall)

    Raises:
        CalibrationError: fewer than min_users usable users
    """
    if bins < 1 or min_users < 1:
        raise ValueError("bins and min_users must be >= 1")
    values = _user_values(entropies)
    home_of = {a.user_id: a.home_cell for a in homes if a.qualifies and a.home_cell is not None}

    users = sorted(u for u in values if u in home_of)
    missing = [u for u in users if home_of[u] not in density]
    if missing:
        raise CalibrationError(f"No density for the home tower of {len(missing)} users "
                               f"(e.g. {missing[0]} at {home_of[missing[0]]})")
    if len(users) < min_users:
        raise CalibrationError(f"Only {len(users)} users with a home available for calibration; "
                               f"at least {min_users} required")

    x = np.array([math.log10(density[home_of[u]]) for u in users])
    h = np.array([values[u] for u in users])

    edges = _initial_edges(x, bins)
    counts = np.bincount(_assign(x, edges), minlength=len(edges) - 1)
    merged = _merge_thin(edges, counts, min_users)
    if len(merged) < len(edges):
        logger.warning(f"Calibration: merged {len(edges) - len(merged)} thin bins "
                       f"(min_users={min_users}); {len(merged) - 1} bins remain")

    index = _assign(x, merged)
    counts = np.bincount(index, minlength=len(merged) - 1)
    sums = np.bincount(index, weights=h, minlength=len(merged) - 1)
    table = CalibrationTable(edges=tuple(float(e) for e in merged),
                             means=tuple(float(s / c) for s, c in zip(sums, counts)),
                             counts=tuple(int(c) for c in counts))
    logger.info(f"Calibration: {len(users)} users in {len(table)} bins over log10(d) "
                f"[{table.edges[0]:.3f}, {table.edges[-1]:.3f}]")
    return table


def corrected_mobility_entropy(H: Union[EntropyValue, float], density: float,
                               table: CalibrationTable, user_id: str = '') -> CmeValue:
    """CME = H - Ĥ(bin(d)); a density outside the table range is clamped to the nearest bin"""
    if isinstance(H, EntropyValue):
        user_id = user_id or H.user_id
        H = H.H
    if density <= 0:
        raise ValueError(f"Density must be positive, got {density}")
    index, clamped = table.bin_of(math.log10(density))
    if clamped:
        logger.debug(f"CME for user {user_id}: density {density:.4g} outside calibration range, "
                     f"clamped to bin {index}")
    return CmeValue(user_id, float(H) - table.means[index], index, clamped)
