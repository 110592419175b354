"""
Domain records produced by ingest: CDR events, tower registry, census table,
admin geometries and the reject log
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from shapely.geometry.base import BaseGeometry

ADMIN_LEVELS = ('cell', 'iris', 'commune', 'custom')
CUSTOM_LEVEL_PREFIX = 'custom:'

REJECT_REASONS = (
    'malformed', 'bad_timestamp', 'unknown_cell', 'out_of_window', 'bad_coordinate',
    'negative_population', 'bad_attribute', 'duplicate_unit', 'unclosed_ring',
    'invalid_polygon', 'missing_property', 'invalid_level',
)


def is_admin_level(level: str) -> bool:
    """One of ADMIN_LEVELS, or a named custom level such as 'custom:canton'"""
    if level in ADMIN_LEVELS:
        return True
    return level.startswith(CUSTOM_LEVEL_PREFIX) and bool(level[len(CUSTOM_LEVEL_PREFIX):].strip())


class CdrRecord(NamedTuple):
    """One pseudonymized event: user token, UTC epoch seconds, serving cell"""
    user_id: str
    timestamp: int
    cell_id: str


@dataclass(frozen=True)
class Reject:
    line_number: int
    reason: str
    payload: str


class RejectLog:
    """Line-level rejects with reason codes, plus the line/record counters behind conservation"""

    def __init__(self, source: str = ''):
        self.source = source
        self.entries: List[Reject] = []
        self.lines_read = 0
        self.accepted = 0

    def add(self, line_number: int, reason: str, payload: str) -> None:
        if reason not in REJECT_REASONS:
            raise ValueError(f"Unknown reject reason: {reason}")
        self.entries.append(Reject(line_number, reason, payload))

    @property
    def rejected(self) -> int:
        return len(self.entries)

    def counts(self) -> Dict[str, int]:
        return dict(sorted(Counter(entry.reason for entry in self.entries).items()))

    def is_balanced(self) -> bool:
        return self.lines_read == self.accepted + self.rejected

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Reject]:
        return iter(self.entries)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.line_number, r.reason, r.payload) for r in self.entries],
            columns=['line_number', 'reason', 'payload'],
        )

    def summary(self) -> Dict[str, object]:
        return {
            'source': self.source,
            'lines_read': self.lines_read,
            'accepted': self.accepted,
            'rejected': self.rejected,
            'reasons': self.counts(),
        }


@dataclass(frozen=True)
class TowerSite:
    cell_id: str
    lon: float
    lat: float
    x: float
    y: float


@dataclass(frozen=True)
class TowerRegistry:
    """
    Tower sites keyed by cell_id, with WGS84 and projected planar (meters) coordinates

    ``projection`` is the ingest.projection.Projection used to derive x/y; it is None
    only for registries built directly from planar coordinates.
    """
    entries: Mapping[str, TowerSite]
    projection: Optional[object] = None
    rejects: Optional[RejectLog] = field(default=None, compare=False)

    def __contains__(self, cell_id: str) -> bool:
        return cell_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, cell_id: str) -> TowerSite:
        return self.entries[cell_id]

    @property
    def cell_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self.entries))

    def xy(self, cell_ids=None) -> np.ndarray:
        ids = self.cell_ids if cell_ids is None else cell_ids
        return np.array([(self.entries[c].x, self.entries[c].y) for c in ids], dtype=float).reshape(-1, 2)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(s.cell_id, s.lon, s.lat, s.x, s.y) for s in (self.entries[c] for c in self.cell_ids)],
            columns=['cell_id', 'lon', 'lat', 'x', 'y'],
        )

    @classmethod
    def from_planar(cls, sites: Mapping[str, Tuple[float, float]], projection=None) -> 'TowerRegistry':
        """Build a registry from planar coordinates; lon/lat come from the inverse projection when given"""
        entries = {}
        for cell_id, (x, y) in sites.items():
            if projection is not None:
                lon, lat = projection.inverse(x, y)
            else:
                lon, lat = float('nan'), float('nan')
            entries[str(cell_id)] = TowerSite(str(cell_id), float(lon), float(lat), float(x), float(y))
        return cls(entries=entries, projection=projection)


@dataclass(frozen=True)
class CensusRow:
    population: float
    attributes: Mapping[str, float]


@dataclass(frozen=True)
class CensusTable:
    rows: Mapping[str, CensusRow]
    attribute_names: Tuple[str, ...] = ()
    rejects: Optional[RejectLog] = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, unit_id: str) -> bool:
        return unit_id in self.rows

    def population(self) -> Dict[str, float]:
        return {unit: self.rows[unit].population for unit in sorted(self.rows)}

    def attribute(self, name: str) -> Dict[str, float]:
        if name not in self.attribute_names:
            raise KeyError(f"Census has no attribute {name!r}; available: {list(self.attribute_names)}")
        return {unit: self.rows[unit].attributes[name] for unit in sorted(self.rows)}

    def to_frame(self) -> pd.DataFrame:
        records = []
        for unit in sorted(self.rows):
            row = self.rows[unit]
            records.append([unit, row.population] + [row.attributes[a] for a in self.attribute_names])
        return pd.DataFrame(records, columns=['unit_id', 'population', *self.attribute_names])


@dataclass(frozen=True)
class AdminGeometry:
    unit_id: str
    level: str
    polygon: BaseGeometry


@dataclass(frozen=True)
class AdminCollection:
    """Validated admin units across levels"""
    units: Tuple[AdminGeometry, ...]
    rejects: Optional[RejectLog] = field(default=None, compare=False)

    def levels(self) -> Tuple[str, ...]:
        return tuple(sorted({unit.level for unit in self.units}))

    def level(self, name: str) -> List[AdminGeometry]:
        return [unit for unit in self.units if unit.level == name]

    def __len__(self) -> int:
        return len(self.units)

    def __iter__(self):
        return iter(self.units)
