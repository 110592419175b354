"""
Area-overlap crosswalks between spatial delineations

weight(s -> t) = area(s ∩ t) / area(s). Rows sum to 1 when the target layer
covers the source unit; otherwise the row is flagged partial with the
uncovered fraction. Overlapping targets can push a row above 1; such rows are
reported as overcovered with the excess.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd
from scipy import sparse
from shapely import STRtree
from shapely.validation import explain_validity

from errors import GeometryError
from geometry.voronoi import Tessellation
from ingest.records import AdminGeometry

logger = logging.getLogger(__name__)

COVERAGE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Crosswalk:
    source_level: str
    target_level: str
    weights: Mapping[str, Tuple[Tuple[str, float], ...]]
    source_areas: Mapping[str, float] = field(default_factory=dict)
    uncovered: Mapping[str, float] = field(default_factory=dict)
    overcovered: Mapping[str, float] = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.uncovered)

    @property
    def full_coverage(self) -> bool:
        """Every row sums to 1, so summing conserves totals"""
        return not self.uncovered and not self.overcovered

    def sources(self) -> Tuple[str, ...]:
        return tuple(sorted(self.weights))

    def targets(self) -> Tuple[str, ...]:
        return tuple(sorted({t for row in self.weights.values() for t, _ in row}))

    def row(self, source: str) -> Dict[str, float]:
        return dict(self.weights.get(source, ()))

    def row_sum(self, source: str) -> float:
        return sum(w for _, w in self.weights.get(source, ()))

    def to_matrix(self, sources: Sequence[str], targets: Sequence[str]) -> sparse.csr_matrix:
        """Sparse (sources x targets) weight matrix in the given orders"""
        s_index = {s: i for i, s in enumerate(sources)}
        t_index = {t: j for j, t in enumerate(targets)}
        rows, cols, data = [], [], []
        for s in sources:
            for t, w in self.weights.get(s, ()):
                if t in t_index:
                    rows.append(s_index[s])
                    cols.append(t_index[t])
                    data.append(w)
        return sparse.csr_matrix((data, (rows, cols)), shape=(len(sources), len(targets)))

    def compose(self, other: 'Crosswalk') -> 'Crosswalk':
        """Chain self (a -> b) with other (b -> c) into a -> c"""
        if other.source_level != self.target_level:
            raise ValueError(f"Cannot compose {self.source_level}->{self.target_level} with "
                             f"{other.source_level}->{other.target_level}")
        weights, uncovered, overcovered = {}, {}, {}
        for s in self.sources():
            combined: Dict[str, float] = {}
            for t, w in self.weights[s]:
                for c, v in other.weights.get(t, ()):
                    combined[c] = combined.get(c, 0.0) + w * v
            weights[s] = tuple(sorted(combined.items()))
            classify_coverage(s, sum(combined.values()), uncovered, overcovered)
        return Crosswalk(self.source_level, other.target_level, weights,
                         source_areas=dict(self.source_areas), uncovered=uncovered, overcovered=overcovered)

    @classmethod
    def identity(cls, ids: Iterable[str], level: str,
                 areas: Optional[Mapping[str, float]] = None) -> 'Crosswalk':
        """Crosswalk of a level onto itself; unit areas default to 1"""
        ids = sorted(ids)
        areas = dict(areas) if areas else dict.fromkeys(ids, 1.0)
        return cls(level, level, {u: ((u, 1.0),) for u in ids}, source_areas=areas)

    def to_frame(self) -> pd.DataFrame:
        records = [(s, t, w) for s in self.sources() for t, w in self.weights[s]]
        return pd.DataFrame(records, columns=['source_id', 'target_id', 'weight'])

    def coverage_frame(self) -> pd.DataFrame:
        records = [(s, self.row_sum(s), s in self.uncovered, self.uncovered.get(s, 0.0),
                    self.overcovered.get(s, 0.0)) for s in self.sources()]
        return pd.DataFrame(records, columns=['source_id', 'covered', 'partial', 'uncovered', 'overcovered'])


def classify_coverage(source: str, total: float, uncovered: Dict[str, float],
                      overcovered: Dict[str, float]) -> None:
    """Record a row whose weights miss 1 as uncovered (short) or overcovered (excess)"""
    if total < 1.0 - COVERAGE_TOLERANCE:
        uncovered[source] = 1.0 - total
    elif total > 1.0 + COVERAGE_TOLERANCE:
        overcovered[source] = total - 1.0


def _units_of(layer: Union[Tessellation, Iterable[AdminGeometry]], role: str
              ) -> Tuple[str, Dict[str, object]]:
    if isinstance(layer, Tessellation):
        return 'cell', {c: layer.cells[c] for c in layer.cell_ids}
    units = list(layer)
    levels = {u.level for u in units}
    if len(levels) > 1:
        raise ValueError(f"{role} layer mixes levels {sorted(levels)}")
    polygons = {u.unit_id: u.polygon for u in units}
    return (levels.pop() if levels else 'custom'), polygons


def build_crosswalk(source: Union[Tessellation, Iterable[AdminGeometry]],
                    target: Iterable[AdminGeometry],
                    source_level: Optional[str] = None,
                    target_level: Optional[str] = None) -> Crosswalk:
    """
    Area-overlap crosswalk from a source layer onto a target layer

    Args:
        source: tessellation or admin units of one level (planar)
        target: admin units of one level in the same projection
        source_level, target_level: override the level names

    Raises:
        GeometryError: naming the first invalid polygon found
    """
    detected_source, sources = _units_of(source, 'source')
    detected_target, targets = _units_of(target, 'target')
    source_level = source_level or detected_source
    target_level = target_level or detected_target

    for unit_id, polygon in list(sources.items()) + list(targets.items()):
        if polygon.is_empty or not polygon.is_valid:
            raise GeometryError(unit_id, explain_validity(polygon))

    target_ids = sorted(targets)
    target_geoms = [targets[t] for t in target_ids]
    tree = STRtree(target_geoms) if target_geoms else None

    weights, areas, uncovered, overcovered = {}, {}, {}, {}
    for s in sorted(sources):
        polygon = sources[s]
        area = polygon.area
        if area <= 0:
            raise GeometryError(s, "zero area")
        areas[s] = area
        row: List[Tuple[str, float]] = []
        if tree is not None:
            for k in sorted(tree.query(polygon, predicate='intersects')):
                overlap = polygon.intersection(target_geoms[k]).area
                if overlap > 0:
                    row.append((target_ids[k], overlap / area))
        weights[s] = tuple(row)
        classify_coverage(s, sum(w for _, w in row), uncovered, overcovered)

    if uncovered:
        logger.warning(f"Crosswalk {source_level}->{target_level}: {len(uncovered)} of {len(weights)} "
                       f"source units only partially covered (max uncovered "
                       f"{max(uncovered.values()):.3%})")
    if overcovered:
        logger.warning(f"Crosswalk {source_level}->{target_level}: {len(overcovered)} source units covered "
                       f"more than once by overlapping targets (max excess {max(overcovered.values()):.3%})")
    logger.info(f"Crosswalk {source_level}->{target_level}: {len(weights)} sources, "
                f"{len(target_ids)} targets")
    return Crosswalk(source_level, target_level, weights, source_areas=areas, uncovered=uncovered,
                     overcovered=overcovered)
