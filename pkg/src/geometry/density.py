"""
Tower density covariate: d = 1 / Voronoi cell area in km^2
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, Mapping

import numpy as np
import pandas as pd

from geometry.voronoi import Tessellation

logger = logging.getLogger(__name__)

M2_PER_KM2 = 1e6


@dataclass(frozen=True)
class DensityMap:
    values: Mapping[str, float]

    def __getitem__(self, cell_id: str) -> float:
        return self.values[cell_id]

    def __contains__(self, cell_id: str) -> bool:
        return cell_id in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.values))

    def __len__(self) -> int:
        return len(self.values)

    def get(self, cell_id: str, default=None):
        return self.values.get(cell_id, default)

    def log10(self) -> Dict[str, float]:
        return {c: math.log10(self.values[c]) for c in self}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(c, self.values[c]) for c in self], columns=['cell_id', 'density'])


def tower_density(tess: Tessellation) -> DensityMap:
    """Towers per km^2 for every cell, as 1 / cell area"""
    values = {}
    for cell_id, area in tess.areas().items():
        values[cell_id] = M2_PER_KM2 / area
    densities = np.fromiter(values.values(), dtype=float)
    if len(densities):
        logger.info(f"Tower density: median {np.median(densities):.4g}/km^2, "
                    f"range [{densities.min():.4g}, {densities.max():.4g}]")
    return DensityMap(values=values)
