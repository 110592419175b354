"""
Tower registry ingest: ``cell_id,lon,lat`` CSV -> TowerRegistry with planar coordinates
"""

import csv
import logging
import math
from typing import Iterable, Optional, TextIO, Tuple

from config import StudyConfig
from errors import DuplicateTowerError, IngestError
from ingest.cdr_reader import check_header
from ingest.projection import Projection
from ingest.records import RejectLog, TowerRegistry, TowerSite

logger = logging.getLogger(__name__)

TOWER_HEADER = ['cell_id', 'lon', 'lat']


def build_registry(rows: Iterable[Tuple[str, float, float]],
                   origin: Optional[Tuple[float, float]] = None,
                   rejects: Optional[RejectLog] = None) -> TowerRegistry:
    """
    Project validated (cell_id, lon, lat) rows into a registry

    Args:
        rows: tower rows, ids unique
        origin: projection origin (lon, lat); None = centroid of the rows
        rejects: reject log to attach to the registry

    Raises:
        DuplicateTowerError: when a cell_id occurs twice
    """
    rows = list(rows)
    seen = set()
    for cell_id, _, _ in rows:
        if cell_id in seen:
            raise DuplicateTowerError(cell_id)
        seen.add(cell_id)

    if origin is None:
        projection = Projection.centered_on((lon, lat) for _, lon, lat in rows)
    else:
        projection = Projection(*origin)

    entries = {}
    if rows:
        xs, ys = projection.forward([r[1] for r in rows], [r[2] for r in rows])
        for (cell_id, lon, lat), x, y in zip(rows, xs, ys):
            if not (math.isfinite(x) and math.isfinite(y)):
                raise IngestError(f"Projection produced non-finite coordinates for {cell_id}")
            entries[cell_id] = TowerSite(cell_id, float(lon), float(lat), float(x), float(y))

    logger.info(f"Tower registry: {len(entries)} towers, projection {projection}")
    return TowerRegistry(entries={c: entries[c] for c in sorted(entries)},
                         projection=projection, rejects=rejects)


def parse_towers(stream: TextIO, config: Optional[StudyConfig] = None,
                 source: str = '') -> TowerRegistry:
    """
    Parse a tower CSV into a projected registry

    Out-of-range or non-numeric coordinates are rejected line by line;
    a duplicate cell_id is fatal.
    """
    rejects = RejectLog(source)
    reader = csv.reader(stream)
    check_header(next(reader, None), TOWER_HEADER, source or 'tower stream')

    rows = []
    for row in reader:
        rejects.lines_read += 1
        payload = ','.join(row)
        if len(row) != 3 or not row[0].strip():
            rejects.add(reader.line_num, 'malformed', payload)
            continue
        cell_id = row[0].strip()
        try:
            lon, lat = float(row[1]), float(row[2])
        except ValueError:
            rejects.add(reader.line_num, 'bad_coordinate', payload)
            continue
        if not (math.isfinite(lon) and math.isfinite(lat)) or not (-180.0 <= lon <= 180.0) \
                or not (-90.0 <= lat <= 90.0):
            rejects.add(reader.line_num, 'bad_coordinate', payload)
            continue
        rejects.accepted += 1
        rows.append((cell_id, lon, lat))

    if rejects.rejected:
        logger.warning(f"Tower file {source}: {rejects.rejected} rejected lines {rejects.counts()}")

    origin = config.projection_origin if config is not None else None
    return build_registry(rows, origin=origin, rejects=rejects)
