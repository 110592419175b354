"""
Binary contiguity weights over Voronoi cells (rook rule)

Two cells are neighbours iff they share a boundary segment of positive length;
cells touching at a single point are not.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from shapely import STRtree

from geometry.voronoi import Tessellation

logger = logging.getLogger(__name__)

# Shared edges shorter than this fraction of the bbox diagonal are numerical noise
EDGE_TOLERANCE = 1e-7


@dataclass(frozen=True)
class AdjacencyWeights:
    """Sparse symmetric binary weights; ``neighbors`` never lists the unit itself"""
    ids: Tuple[str, ...]
    neighbors: Mapping[str, Tuple[str, ...]]
    include_self: bool = True

    def __len__(self) -> int:
        return len(self.ids)

    def weight(self, a: str, b: str) -> int:
        if a == b:
            return 1 if self.include_self else 0
        return 1 if b in self.neighbors.get(a, ()) else 0

    def cardinalities(self) -> Dict[str, int]:
        extra = 1 if self.include_self else 0
        return {unit: len(self.neighbors[unit]) + extra for unit in self.ids}

    def to_sparse(self, order: Optional[Iterable[str]] = None) -> sparse.csr_matrix:
        """Weights as a CSR matrix with rows/columns in ``order`` (default: ids)"""
        order = tuple(order) if order is not None else self.ids
        index = {unit: k for k, unit in enumerate(order)}
        rows, cols = [], []
        for unit in order:
            for other in self.neighbors[unit]:
                if other in index:
                    rows.append(index[unit])
                    cols.append(index[other])
            if self.include_self:
                rows.append(index[unit])
                cols.append(index[unit])
        data = np.ones(len(rows), dtype=float)
        return sparse.csr_matrix((data, (rows, cols)), shape=(len(order), len(order)))

    def with_self(self) -> 'AdjacencyWeights':
        return AdjacencyWeights(self.ids, self.neighbors, include_self=True)

    def to_frame(self) -> pd.DataFrame:
        edges = [(a, b) for a in self.ids for b in self.neighbors[a] if a < b]
        return pd.DataFrame(edges, columns=['unit_a', 'unit_b'])

    @classmethod
    def from_pairs(cls, ids: Iterable[str], pairs: Iterable[Tuple[str, str]],
                   include_self: bool = True) -> 'AdjacencyWeights':
        ids = tuple(sorted(ids))
        linked = {unit: set() for unit in ids}
        for a, b in pairs:
            if a == b:
                continue
            if a not in linked or b not in linked:
                raise KeyError(f"Unknown unit in adjacency pair ({a}, {b})")
            linked[a].add(b)
            linked[b].add(a)
        return cls(ids=ids, neighbors={u: tuple(sorted(linked[u])) for u in ids},
                   include_self=include_self)


def _shared_edges_from_polygons(tess: Tessellation) -> Dict[Tuple[str, str], float]:
    ids = tess.cell_ids
    geoms = [tess.cells[c] for c in ids]
    tree = STRtree(geoms)
    left, right = tree.query(geoms, predicate='intersects')
    shared = {}
    for i, j in zip(left, right):
        if i >= j:
            continue
        length = geoms[i].boundary.intersection(geoms[j].boundary).length
        if length > 0:
            shared[(ids[i], ids[j])] = length
    return shared


def build_adjacency(tess: Tessellation, include_self: bool = True) -> AdjacencyWeights:
    """
    Derive rook contiguity weights from a tessellation

    Args:
        tess: Voronoi tessellation
        include_self: set w_ii = 1 (the star form of G_i*)
    """
    shared = tess.ridges if tess.ridges is not None else _shared_edges_from_polygons(tess)
    minx, miny, maxx, maxy = tess.bbox
    tolerance = EDGE_TOLERANCE * float(np.hypot(maxx - minx, maxy - miny))
    pairs = [pair for pair, length in shared.items() if length > tolerance]
    skipped = len(shared) - len(pairs)
    if skipped:
        logger.debug(f"Ignored {skipped} point-like contacts below {tolerance:.3g} m")

    weights = AdjacencyWeights.from_pairs(tess.cell_ids, pairs, include_self=include_self)
    isolated = [u for u in weights.ids if not weights.neighbors[u]]
    if isolated and len(weights.ids) > 1:
        logger.warning(f"{len(isolated)} cells without neighbours: {isolated[:5]}")
    logger.info(f"Adjacency: {len(weights.ids)} units, {len(pairs)} shared edges, "
                f"include_self={include_self}")
    return weights
