"""
Voronoi tessellation of tower sites, clipped to the padded tower bounding box

Cells are the stand-in for tower cover areas. The diagram is built with qhull
(scipy.spatial.Voronoi) over the sites plus four far-away guard points, which
makes every real cell finite before clipping.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import Voronoi, cKDTree
from shapely.geometry import LineString, MultiPoint, Point, Polygon, box

from errors import GeometryError, InsufficientDataError, InvariantViolation
from ingest.records import TowerRegistry
from utils.file_handler import feature_collection

logger = logging.getLogger(__name__)

DUPLICATE_OFFSET_M = 0.01
PARTITION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Tessellation:
    cells: Mapping[str, Polygon]
    bbox: Tuple[float, float, float, float]
    sites: Mapping[str, Tuple[float, float]]
    padding_fraction: float = 0.1
    projection: Optional[object] = None
    # (cell_a, cell_b) with cell_a < cell_b -> length of the shared Voronoi edge inside the bbox
    ridges: Optional[Mapping[Tuple[str, str], float]] = None
    _tree: Optional[cKDTree] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = self.cell_ids
        if ids:
            object.__setattr__(self, '_tree', cKDTree(np.array([self.sites[c] for c in ids])))

    @property
    def cell_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self.cells))

    def __len__(self) -> int:
        return len(self.cells)

    def area(self, cell_id: str) -> float:
        return self.cells[cell_id].area

    def areas(self) -> Dict[str, float]:
        return {c: self.cells[c].area for c in self.cell_ids}

    @property
    def bbox_polygon(self) -> Polygon:
        return box(*self.bbox)

    def locate(self, points) -> List[str]:
        """Cell id of the nearest site for each planar point (the enclosing Voronoi cell)"""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        _, index = self._tree.query(points)
        ids = self.cell_ids
        return [ids[i] for i in np.atleast_1d(index)]

    def metadata(self) -> Dict[str, object]:
        meta = {'padding_fraction': self.padding_fraction, 'bbox': list(self.bbox),
                'n_cells': len(self.cells)}
        if self.projection is not None:
            meta['projection'] = self.projection.describe()
        return meta

    def to_geojson(self, properties: Optional[Mapping[str, Mapping[str, object]]] = None) -> dict:
        return feature_collection(self.cells, 'cell_id', properties=properties, metadata=self.metadata())


def _perturb_duplicates(ids: Sequence[str], points: np.ndarray) -> np.ndarray:
    """Move every repeated site by 1 cm in a direction seeded by its cell_id"""
    points = points.copy()
    seen = {}
    for i, cell_id in enumerate(ids):
        key = (points[i, 0], points[i, 1])
        if key not in seen:
            seen[key] = cell_id
            continue
        owner = seen[key]
        attempt = 0
        while key in seen:
            digest = hashlib.sha256(f"{cell_id}:{attempt}".encode('utf-8')).digest()
            angle = int.from_bytes(digest[:8], 'big') / 2 ** 64 * 2 * math.pi
            points[i, 0] += DUPLICATE_OFFSET_M * math.cos(angle)
            points[i, 1] += DUPLICATE_OFFSET_M * math.sin(angle)
            key = (points[i, 0], points[i, 1])
            attempt += 1
        logger.warning(f"Tower {cell_id} shares coordinates with {owner}; "
                       f"perturbed by {DUPLICATE_OFFSET_M} m")
        seen[key] = cell_id
    return points


def padded_bbox(points: np.ndarray, padding_fraction: float,
                min_padding_m: float) -> Tuple[float, float, float, float]:
    minx, miny = points.min(axis=0)
    maxx, maxy = points.max(axis=0)
    width, height = maxx - minx, maxy - miny
    pad_x = padding_fraction * width if width > 0 else min_padding_m
    pad_y = padding_fraction * height if height > 0 else min_padding_m
    return float(minx - pad_x), float(miny - pad_y), float(maxx + pad_x), float(maxy + pad_y)


def build_voronoi(registry: TowerRegistry, padding_fraction: float = 0.1,
                  min_padding_m: float = 1000.0) -> Tessellation:
    """
    Build the clipped Voronoi tessellation of the registry's tower sites

    Args:
        registry: towers with planar coordinates
        padding_fraction: bbox padding per side, as a fraction of the tower extent
        min_padding_m: padding used along an axis where the extent is zero

    Returns:
        Tessellation whose cells partition the padded bbox
    """
    ids = registry.cell_ids
    if not ids:
        raise InsufficientDataError("Cannot build a tessellation from zero towers")

    points = _perturb_duplicates(ids, registry.xy(ids))
    bbox = padded_bbox(points, padding_fraction, min_padding_m)
    frame = box(*bbox)

    cx, cy = (bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0
    reach = 10.0 * max(bbox[2] - bbox[0], bbox[3] - bbox[1])
    guards = np.array([[cx - reach, cy - reach], [cx + reach, cy - reach],
                       [cx + reach, cy + reach], [cx - reach, cy + reach]])
    diagram = Voronoi(np.vstack([points, guards]))

    cells = {}
    for i, cell_id in enumerate(ids):
        region = diagram.regions[diagram.point_region[i]]
        if not region or -1 in region:
            raise GeometryError(cell_id, "unbounded Voronoi region")
        hull = MultiPoint(diagram.vertices[region]).convex_hull
        cell = hull.intersection(frame)
        if not isinstance(cell, Polygon) or cell.area <= 0:
            raise GeometryError(cell_id, f"degenerate Voronoi cell ({cell.geom_type})")
        if not cell.covers(Point(points[i])):
            raise GeometryError(cell_id, "tower site lies outside its own cell")
        cells[cell_id] = cell

    frame_area = frame.area
    total = sum(cell.area for cell in cells.values())
    if abs(total - frame_area) > PARTITION_TOLERANCE * frame_area:
        raise InvariantViolation(f"Voronoi cells cover {total:.6f} m^2 of a {frame_area:.6f} m^2 bbox")

    ridges = {}
    n = len(ids)
    for (i, j), vertices in zip(diagram.ridge_points, diagram.ridge_vertices):
        if i >= n or j >= n or -1 in vertices:
            continue
        edge = LineString(diagram.vertices[vertices]).intersection(frame)
        if edge.length > 0:
            a, b = sorted((ids[i], ids[j]))
            ridges[(a, b)] = ridges.get((a, b), 0.0) + edge.length

    logger.info(f"Voronoi tessellation: {len(cells)} cells, bbox {tuple(round(v, 1) for v in bbox)}, "
                f"padding {padding_fraction:.0%}")
    return Tessellation(cells=cells, bbox=bbox,
                        sites={c: (float(points[i, 0]), float(points[i, 1])) for i, c in enumerate(ids)},
                        padding_fraction=padding_fraction, projection=registry.projection,
                        ridges=ridges)
