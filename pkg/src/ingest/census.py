"""
Census ingest: ``unit_id,population[,attr...]`` CSV -> CensusTable
"""

import csv
import logging
import math
from typing import TextIO

from errors import IngestError
from ingest.records import CensusRow, CensusTable, RejectLog

logger = logging.getLogger(__name__)


def parse_census(stream: TextIO, source: str = '') -> CensusTable:
    """
    Parse a census table; attribute names come from the header

    Rows with a negative population, a non-numeric value or a duplicate unit_id are
    rejected. A header-only file yields an empty table.
    """
    rejects = RejectLog(source)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise IngestError(f"{source or 'census stream'}: empty file, header unit_id,population required")
    header = [name.strip().lstrip('\ufeff') for name in header]
    if header[:2] != ['unit_id', 'population']:
        raise IngestError(f"{source or 'census stream'}: header must start with unit_id,population, "
                          f"got {','.join(header)}")
    attribute_names = tuple(header[2:])
    if len(set(attribute_names)) != len(attribute_names) or any(not a for a in attribute_names):
        raise IngestError(f"{source or 'census stream'}: attribute names must be unique and non-empty")

    rows = {}
    for row in reader:
        rejects.lines_read += 1
        payload = ','.join(row)
        if len(row) != len(header) or not row[0].strip():
            rejects.add(reader.line_num, 'malformed', payload)
            continue
        unit_id = row[0].strip()
        try:
            population = float(row[1])
        except ValueError:
            rejects.add(reader.line_num, 'malformed', payload)
            continue
        if not math.isfinite(population):
            rejects.add(reader.line_num, 'malformed', payload)
            continue
        if population < 0:
            rejects.add(reader.line_num, 'negative_population', payload)
            continue
        try:
            attributes = {name: float(value) for name, value in zip(attribute_names, row[2:])}
        except ValueError:
            rejects.add(reader.line_num, 'bad_attribute', payload)
            continue
        if unit_id in rows:
            rejects.add(reader.line_num, 'duplicate_unit', payload)
            continue
        rejects.accepted += 1
        rows[unit_id] = CensusRow(population=population, attributes=attributes)

    if rejects.rejected:
        logger.warning(f"Census {source}: {rejects.rejected} rejected rows {rejects.counts()}")
    logger.info(f"Census {source or 'stream'}: {len(rows)} units, attributes {list(attribute_names)}")
    return CensusTable(rows={u: rows[u] for u in sorted(rows)}, attribute_names=attribute_names,
                       rejects=rejects)
