"""
Getis-Ord G_i* local hotspot statistic (star form, w_ii included)

z_i = (sum_j w_ij x_j - X̄ sum_j w_ij) / (S sqrt[(n sum_j w_ij^2 - (sum_j w_ij)^2) / (n - 1)])
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from errors import DegenerateFieldError, InsufficientDataError
from geometry.adjacency import AdjacencyWeights
from utils.file_handler import feature_collection

logger = logging.getLogger(__name__)

CLASSES = ('hot', 'neutral', 'cold')
DEFAULT_Z_CRIT = 1.645


@dataclass(frozen=True)
class GiStarResult:
    ids: Tuple[str, ...]
    z: Mapping[str, float]
    classes: Mapping[str, str]
    z_crit: float = DEFAULT_Z_CRIT

    def hot(self) -> frozenset:
        return frozenset(u for u in self.ids if self.classes[u] == 'hot')

    def cold(self) -> frozenset:
        return frozenset(u for u in self.ids if self.classes[u] == 'cold')

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'unit_id': list(self.ids),
                             'z': [self.z[u] for u in self.ids],
                             'class': [self.classes[u] for u in self.ids]})

    def to_geojson(self, geometries: Mapping[str, object], metadata: Optional[dict] = None) -> dict:
        properties = {u: {'z': None if math.isnan(self.z[u]) else self.z[u], 'class': self.classes[u]}
                      for u in self.ids}
        return feature_collection({u: geometries[u] for u in self.ids}, 'unit_id', properties,
                                  metadata={'z_crit': self.z_crit, **(metadata or {})})


def classify(z: float, z_crit: float = DEFAULT_Z_CRIT) -> str:
    if math.isnan(z):
        return 'neutral'
    if z >= z_crit:
        return 'hot'
    if z <= -z_crit:
        return 'cold'
    return 'neutral'


def getis_ord_gi_star(values: Mapping[str, float], weights: AdjacencyWeights,
                      z_crit: float = DEFAULT_Z_CRIT) -> GiStarResult:
    """
    G_i* z-scores and hot/cold/neutral classes for every unit of the weights

    Units whose neighbourhood spans all n units have a zero denominator; their
    z is NaN and their class neutral.

    Raises:
        InsufficientDataError: fewer than 3 units
        DegenerateFieldError: all values equal
    """
    ids = weights.ids
    missing = [u for u in ids if u not in values]
    if missing:
        raise KeyError(f"No value for {len(missing)} units (e.g. {missing[0]})")
    n = len(ids)
    if n < 3:
        raise InsufficientDataError(f"G_i* needs at least 3 units, got {n}")

    x = np.array([values[u] for u in ids], dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("G_i* values must be finite")
    if np.ptp(x) == 0:
        raise DegenerateFieldError()

    if not weights.include_self:
        logger.debug("G_i*: adding self-weights for the star form")
        weights = weights.with_self()
    W = weights.to_sparse(ids)

    x_bar = x.mean()
    S = x.std()
    row_sum = np.asarray(W.sum(axis=1)).ravel()
    row_sq = np.asarray(W.multiply(W).sum(axis=1)).ravel()
    numerator = W @ (x - x_bar)
    spread = (n * row_sq - row_sum ** 2) / (n - 1)

    z = np.full(n, np.nan)
    defined = spread > 0
    z[defined] = numerator[defined] / (S * np.sqrt(spread[defined]))
    if not defined.all():
        logger.warning(f"G_i*: z undefined for {int((~defined).sum())} units whose neighbourhood "
                       f"covers every unit")

    z_map: Dict[str, float] = {u: float(z[k]) for k, u in enumerate(ids)}
    classes = {u: classify(z_map[u], z_crit) for u in ids}
    result = GiStarResult(ids=ids, z=z_map, classes=classes, z_crit=z_crit)
    logger.info(f"G_i*: {n} units, {len(result.hot())} hot, {len(result.cold())} cold "
                f"at |z| >= {z_crit}")
    return result


@dataclass(frozen=True)
class HotspotAgreement:
    hot_jaccard: float
    cold_jaccard: float
    confusion: pd.DataFrame

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'metric': ['hot_jaccard', 'cold_jaccard'],
                             'value': [self.hot_jaccard, self.cold_jaccard]})


def _jaccard(a: frozenset, b: frozenset) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def hotspot_agreement(a: GiStarResult, b: GiStarResult) -> HotspotAgreement:
    """Jaccard of hot sets, Jaccard of cold sets and the 3x3 class confusion (rows: a, columns: b)"""
    if set(a.ids) != set(b.ids):
        raise ValueError("Hotspot maps cover different units")
    ids = sorted(a.ids)
    confusion = pd.crosstab(pd.Series([a.classes[u] for u in ids], name='a'),
                            pd.Series([b.classes[u] for u in ids], name='b'))
    confusion = confusion.reindex(index=list(CLASSES), columns=list(CLASSES), fill_value=0)
    return HotspotAgreement(hot_jaccard=_jaccard(a.hot(), b.hot()),
                            cold_jaccard=_jaccard(a.cold(), b.cold()),
                            confusion=confusion.astype(int))
