"""
Seeded synthetic world: towers, nested admin grid, census and ground-truth homes

Towers follow a two-regime process: a dense urban disk at the region centre
whose intensity is ``urban_intensity_ratio`` times that of the rural remainder.
Admin units are a regular commune grid, each split into an iris grid, covering
the region expanded by 15% per side so every Voronoi cell is fully covered.
"""

import logging
import math
from dataclasses import dataclass, field, fields
from datetime import datetime, timedelta, timezone
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree
from shapely import STRtree, points
from shapely.geometry import box

from config import StudyConfig, parse_instant
from errors import SynthesisError
from ingest.projection import Projection
from ingest.records import AdminCollection, AdminGeometry, CensusRow, CensusTable, TowerRegistry
from ingest.towers import build_registry
from utils.file_handler import feature_collection

logger = logging.getLogger(__name__)

ADMIN_MARGIN = 0.15
COORDINATE_DECIMALS = 9
EDI_NOISE = 0.1


@dataclass(frozen=True)
class WorldConfig:
    seed: int = 42
    extent_km: float = 40.0
    n_towers: int = 400
    urban_intensity_ratio: float = 4.0
    urban_radius_km: float = 8.0
    n_users: int = 2000
    days: int = 30
    events_per_day: float = 6.0
    p_home_night: float = 0.95
    p_home_day: float = 0.3
    p_work_day: float = 0.5
    work_distance_km: float = 5.0
    nearby_towers: int = 6
    communes_per_side: int = 4
    iris_per_commune_side: int = 3
    origin_lon: float = 2.35
    origin_lat: float = 48.85
    home_unit: str = ''
    start: datetime = datetime(2007, 6, 1, tzinfo=timezone.utc)
    utc_offset_hours: float = 2.0

    def __post_init__(self):
        for name in ('p_home_night', 'p_home_day', 'p_work_day'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SynthesisError(f"{name} must lie in [0, 1]")
        if self.p_home_day + self.p_work_day > 1.0:
            raise SynthesisError("p_home_day + p_work_day must be <= 1")
        for name in ('n_towers', 'n_users', 'nearby_towers', 'communes_per_side', 'iris_per_commune_side'):
            if getattr(self, name) < 1:
                raise SynthesisError(f"{name} must be >= 1")
        if self.days < 0 or self.events_per_day < 0:
            raise SynthesisError("days and events_per_day must be >= 0")
        if self.extent_km <= 0 or self.work_distance_km <= 0 or self.urban_intensity_ratio <= 0:
            raise SynthesisError("extent_km, work_distance_km and urban_intensity_ratio must be > 0")
        if not 0 < self.urban_radius_km < self.extent_km / 2:
            raise SynthesisError("urban_radius_km must be positive and smaller than half the extent")

    @property
    def end(self) -> datetime:
        return self.start + timedelta(days=max(self.days, 1))

    @property
    def origin(self) -> Tuple[float, float]:
        return self.origin_lon, self.origin_lat

    def study_config(self) -> StudyConfig:
        return StudyConfig(start=self.start, end=self.end, utc_offset_hours=self.utc_offset_hours,
                           projection_origin=self.origin)

    @classmethod
    def from_settings(cls, settings: Mapping[str, Mapping[str, Any]], seed: Optional[int] = None
                      ) -> 'WorldConfig':
        synth = settings['synth']
        names = {f.name for f in fields(cls)} - {'start', 'utc_offset_hours'}
        values = {name: synth[name] for name in names if name in synth}
        if seed is not None:
            values['seed'] = seed
        return cls(start=parse_instant(settings['study']['start']),
                   utc_offset_hours=float(settings['study']['utc_offset_hours']), **values)


@dataclass(frozen=True)
class GroundTruth:
    homes: Mapping[str, str]
    census: Mapping[str, CensusTable] = field(default_factory=dict)

    def population(self, level: str = 'cell') -> Dict[str, float]:
        return self.census[level].population()

    def home_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for cell in self.homes.values():
            counts[cell] = counts.get(cell, 0) + 1
        return counts


@dataclass(frozen=True)
class World:
    config: WorldConfig
    registry: TowerRegistry
    admin: AdminCollection
    census: Mapping[str, CensusTable]
    truth: GroundTruth
    urban: frozenset = frozenset()

    def __iter__(self) -> Iterator:
        return iter((self.registry, self.admin, self.census, self.truth))

    @property
    def projection(self) -> Projection:
        return self.registry.projection

    def intensity_ratio(self) -> float:
        """Realized urban / rural tower intensity"""
        cfg = self.config
        half = cfg.extent_km * 1000.0 / 2
        urban_area = math.pi * (cfg.urban_radius_km * 1000.0) ** 2
        rural_area = (2 * half) ** 2 - urban_area
        n_urban = len(self.urban)
        n_rural = len(self.registry) - n_urban
        if n_rural == 0:
            return float('inf')
        return (n_urban / urban_area) / (n_rural / rural_area)

    def tree(self) -> cKDTree:
        return cKDTree(self.registry.xy())


def _tower_positions(cfg: WorldConfig, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    half = cfg.extent_km * 1000.0 / 2
    radius = cfg.urban_radius_km * 1000.0
    urban_area = math.pi * radius ** 2
    rural_area = (2 * half) ** 2 - urban_area
    weight = cfg.urban_intensity_ratio * urban_area
    n_urban = int(rng.binomial(cfg.n_towers, weight / (weight + rural_area)))
    n_rural = cfg.n_towers - n_urban
    if n_urban == 0 or n_rural == 0:
        raise SynthesisError(f"Tower regime left empty (urban={n_urban}, rural={n_rural}); "
                             f"increase n_towers")

    r = radius * np.sqrt(rng.random(n_urban))
    theta = 2 * math.pi * rng.random(n_urban)
    urban = np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    rural = np.empty((0, 2))
    while len(rural) < n_rural:
        candidates = rng.uniform(-half, half, size=(2 * (n_rural - len(rural)) + 8, 2))
        outside = candidates[np.hypot(candidates[:, 0], candidates[:, 1]) > radius]
        rural = np.vstack([rural, outside])[:n_rural]
    return np.vstack([urban, rural]), n_urban


def _admin_grid(cfg: WorldConfig, projection: Projection) -> Tuple[List[AdminGeometry], Dict[str, dict]]:
    """Nested commune/iris squares, planar polygons plus their lon/lat form"""
    half = cfg.extent_km * 1000.0 / 2 * (1 + 2 * ADMIN_MARGIN)
    n_c, n_i = cfg.communes_per_side, cfg.iris_per_commune_side
    step_c = 2 * half / n_c
    step_i = step_c / n_i
    units, lonlat = [], {}
    for row in range(n_c):
        for col in range(n_c):
            commune_id = f"m{row:02d}{col:02d}"
            x0, y0 = -half + col * step_c, -half + row * step_c
            cells = [(commune_id, 'commune', box(x0, y0, x0 + step_c, y0 + step_c))]
            for i_row in range(n_i):
                for i_col in range(n_i):
                    xi, yi = x0 + i_col * step_i, y0 + i_row * step_i
                    cells.append((f"{commune_id}-i{i_row}{i_col}", 'iris',
                                  box(xi, yi, xi + step_i, yi + step_i)))
            for unit_id, level, planar in cells:
                geographic = projection.inverse_geometry(planar)
                lonlat[unit_id] = {'level': level, 'geometry': geographic}
                units.append(AdminGeometry(unit_id, level, projection.forward_geometry(geographic)))
    return units, lonlat


def _locate_units(xy: np.ndarray, units: List[AdminGeometry]) -> List[Optional[str]]:
    """Unit containing each point; the smallest unit_id wins on shared boundaries"""
    ordered = sorted(units, key=lambda u: u.unit_id)
    tree = STRtree([u.polygon for u in ordered])
    point_idx, unit_idx = tree.query(points(xy), predicate='intersects')
    owner: List[Optional[str]] = [None] * len(xy)
    for p, k in sorted(zip(point_idx.tolist(), unit_idx.tolist())):
        if owner[p] is None:
            owner[p] = ordered[k].unit_id
    return owner


def _edi(centroids: np.ndarray, half: float, rng: np.random.Generator) -> np.ndarray:
    """Deprivation rising away from the urban core, with noise"""
    distance = np.hypot(centroids[:, 0], centroids[:, 1]) / half
    return np.round(distance + rng.normal(0.0, EDI_NOISE, len(centroids)), 6)


def generate_world(config: WorldConfig) -> World:
    """
    Build towers, admin units, per-level census and true homes from a seed

    Raises:
        SynthesisError: a tower regime is empty or ``home_unit`` holds no tower
    """
    rng = np.random.default_rng([config.seed, 0])
    xy, n_urban = _tower_positions(config, rng)

    projection = Projection(*config.origin)
    width = max(4, len(str(config.n_towers - 1)))
    ids = [f"c{k:0{width}d}" for k in range(len(xy))]
    lons, lats = projection.inverse(xy[:, 0], xy[:, 1])
    rows = [(cell_id, round(float(lon), COORDINATE_DECIMALS), round(float(lat), COORDINATE_DECIMALS))
            for cell_id, lon, lat in zip(ids, np.atleast_1d(lons), np.atleast_1d(lats))]
    registry = build_registry(rows, origin=config.origin)
    urban = frozenset(ids[:n_urban])

    units, _ = _admin_grid(config, projection)
    admin = AdminCollection(units=tuple(sorted(units, key=lambda u: (u.level, u.unit_id))))

    sites = registry.xy()
    cell_ids = registry.cell_ids
    site_units = {level: dict(zip(cell_ids, _locate_units(sites, admin.level(level))))
                  for level in ('iris', 'commune')}

    candidates = list(cell_ids)
    if config.home_unit:
        if config.home_unit in registry:
            candidates = [config.home_unit]
        else:
            candidates = [c for c in cell_ids
                          if config.home_unit in (site_units['iris'][c], site_units['commune'][c])]
        if not candidates:
            raise SynthesisError(f"home_unit {config.home_unit!r} contains no tower")

    home_rng = np.random.default_rng([config.seed, 1])
    choice = home_rng.integers(0, len(candidates), size=config.n_users)
    user_width = max(6, len(str(config.n_users - 1)))
    homes = {f"u{k:0{user_width}d}": candidates[j] for k, j in enumerate(choice)}

    census = _build_census(config, registry, admin, site_units, homes)
    truth = GroundTruth(homes=homes, census=census)
    world = World(config=config, registry=registry, admin=admin, census=census, truth=truth, urban=urban)
    logger.info(f"Synthetic world: {len(registry)} towers ({n_urban} urban, realized intensity ratio "
                f"{world.intensity_ratio():.2f}), {len(admin)} admin units, {config.n_users} users")
    return world


def _build_census(config: WorldConfig, registry: TowerRegistry, admin: AdminCollection,
                  site_units: Mapping[str, Mapping[str, Optional[str]]],
                  homes: Mapping[str, str]) -> Dict[str, CensusTable]:
    half = config.extent_km * 1000.0 / 2
    edi_rng = np.random.default_rng([config.seed, 2])
    home_counts: Dict[str, int] = {}
    for cell in homes.values():
        home_counts[cell] = home_counts.get(cell, 0) + 1

    census = {}
    cell_ids = registry.cell_ids
    edi = _edi(registry.xy(), half, edi_rng)
    census['cell'] = CensusTable(
        rows={c: CensusRow(float(home_counts.get(c, 0)), {'EDI': float(e)}) for c, e in zip(cell_ids, edi)},
        attribute_names=('EDI',))

    for level in ('iris', 'commune'):
        units = sorted(admin.level(level), key=lambda u: u.unit_id)
        population = dict.fromkeys((u.unit_id for u in units), 0)
        for cell, count in home_counts.items():
            unit = site_units[level][cell]
            if unit is None:
                raise SynthesisError(f"Tower {cell} lies outside every {level} unit")
            population[unit] += count
        centroids = np.array([(u.polygon.centroid.x, u.polygon.centroid.y) for u in units])
        edi = _edi(centroids, half, edi_rng)
        census[level] = CensusTable(
            rows={u.unit_id: CensusRow(float(population[u.unit_id]), {'EDI': float(e)})
                  for u, e in zip(units, edi)},
            attribute_names=('EDI',))
    return census


def admin_geojson(world: World) -> dict:
    """Admin units as a lon/lat FeatureCollection in the ingest format"""
    _, lonlat = _admin_grid(world.config, world.projection)
    return feature_collection({u: v['geometry'] for u, v in lonlat.items()}, 'unit_id',
                              properties={u: {'level': v['level']} for u, v in lonlat.items()})
