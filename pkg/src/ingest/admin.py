"""
Admin polygon ingest: GeoJSON FeatureCollection -> AdminCollection

Each feature carries ``unit_id`` and ``level`` properties; the level is one of
cell, iris, commune, custom or a named ``custom:<name>`` level. Rejects use the
1-based feature index in place of a line number.
"""

import json
import logging
from typing import Optional, TextIO

from shapely.geometry import shape
from shapely.validation import explain_validity

from errors import IngestError
from ingest.projection import Projection
from ingest.records import AdminCollection, AdminGeometry, RejectLog, is_admin_level

logger = logging.getLogger(__name__)


def _rings_closed(geometry: dict) -> bool:
    kind = geometry.get('type')
    coords = geometry.get('coordinates')
    if kind == 'Polygon':
        polygons = [coords]
    elif kind == 'MultiPolygon':
        polygons = coords
    else:
        return False
    for polygon in polygons or []:
        for ring in polygon or []:
            if len(ring) < 4 or list(ring[0]) != list(ring[-1]):
                return False
    return bool(polygons)


def parse_admin(stream: TextIO, projection: Optional[Projection] = None,
                source: str = '') -> AdminCollection:
    """
    Parse admin polygons

    Args:
        stream: GeoJSON text stream
        projection: when given, coordinates are WGS84 lon/lat and are projected;
            otherwise they are taken as planar meters
        source: name used in logs and rejects

    Returns:
        AdminCollection sorted by (level, unit_id), with its reject log
    """
    try:
        document = json.load(stream)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise IngestError(f"{source or 'admin stream'}: not valid JSON ({e})") from e
    if not isinstance(document, dict) or document.get('type') != 'FeatureCollection':
        raise IngestError(f"{source or 'admin stream'}: expected a GeoJSON FeatureCollection")

    rejects = RejectLog(source)
    units = {}
    for index, feature in enumerate(document.get('features') or [], start=1):
        rejects.lines_read += 1
        props = (feature or {}).get('properties') or {}
        unit_id = props.get('unit_id')
        level = props.get('level')
        label = f"unit_id={unit_id},level={level}"
        if unit_id in (None, '') or level in (None, ''):
            rejects.add(index, 'missing_property', label)
            continue
        unit_id, level = str(unit_id), str(level)
        if not is_admin_level(level):
            rejects.add(index, 'invalid_level', label)
            continue

        geometry = (feature or {}).get('geometry') or {}
        if geometry.get('type') not in ('Polygon', 'MultiPolygon'):
            rejects.add(index, 'invalid_polygon', f"{label}: geometry type {geometry.get('type')}")
            continue
        if not _rings_closed(geometry):
            rejects.add(index, 'unclosed_ring', label)
            continue
        try:
            polygon = shape(geometry)
            if projection is not None:
                polygon = projection.forward_geometry(polygon)
        except (ValueError, TypeError, AttributeError) as e:
            rejects.add(index, 'invalid_polygon', f"{label}: {e}")
            continue
        if polygon.is_empty or not polygon.is_valid or polygon.area <= 0:
            rejects.add(index, 'invalid_polygon', f"{label}: {explain_validity(polygon)}")
            continue
        if (level, unit_id) in units:
            rejects.add(index, 'duplicate_unit', label)
            continue

        rejects.accepted += 1
        units[(level, unit_id)] = AdminGeometry(unit_id=unit_id, level=level, polygon=polygon)

    if rejects.rejected:
        logger.warning(f"Admin {source}: {rejects.rejected} rejected features {rejects.counts()}")
    collection = AdminCollection(units=tuple(units[key] for key in sorted(units)), rejects=rejects)
    logger.info(f"Admin {source or 'stream'}: {len(collection)} units on levels {list(collection.levels())}")
    return collection
