"""
CDR veracity pipeline

One CdrPipeline per run: it lazily loads the inputs, builds the tessellation,
runs the per-user map stages (home detection and entropy) in a single pass over
the CDR file, and writes every command's tables through a staging directory
that is promoted on success together with a manifest.
"""

import functools
import itertools
import logging
import platform
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
import pyproj
import scipy
import shapely
import tqdm as tqdm_module
from tqdm import tqdm

from config import StudyConfig, split_list, write_config
from errors import ConfigError, IngestError, InvariantViolation
from geometry import (AdjacencyWeights, Crosswalk, DensityMap, Tessellation, build_adjacency,
                      build_crosswalk, build_voronoi, tower_density)
from home_detection import (HomeAssignment, PopulationVector, ASSIGNMENT_COLUMNS, agreement_matrix,
                            detect_homes, heuristic_consensus, population_vector, resolve_heuristics)
from indicators import (CalibrationTable, EntropyValue, TowerIndicator, average_by_home, calibrate_baseline,
                        corrected_mobility_entropy, mobility_entropy, visit_distribution)
from ingest import (AdminCollection, CensusTable, RejectLog, TowerRegistry, group_by_user, iter_cdr,
                    iter_user_events, parse_admin, parse_census, parse_towers)
from scales import (AggregationMethod, MultiScaleReport, aggregate, crosswalks_from_finest,
                    multi_scale_correlate, parse_methods, sensitivity_report)
from spatial_stats import GiStarResult, cosine_degrees, getis_ord_gi_star, hotspot_agreement
from synth import WorldConfig, generate_cdr, generate_world, study_settings, world_tables
from utils.file_handler import StagedOutputs, feature_collection, open_input, sha256_file

logger = logging.getLogger(__name__)

# Default aggregation methods of the variables the multi-scale report builds
VARIABLE_METHODS = {
    'homes': AggregationMethod.SUM,
    'population': AggregationMethod.SUM,
    'H': AggregationMethod.POPULATION_WEIGHTED_MEAN,
    'CME': AggregationMethod.POPULATION_WEIGHTED_MEAN,
}


def ordered_parallel_map(func: Callable[[Any], Any], items: Iterable[Any], workers: int = 1,
                         desc: Optional[str] = None, progress: bool = False,
                         max_pending: Optional[int] = None) -> Iterator[Any]:
    """
    Apply func to every item and yield the results in submission order

    With more than one worker the items go to a process pool with at most
    ``max_pending`` (default 2 x workers) in flight, so a lazy input is never
    materialized. func and the items must be picklable.
    """
    bar = tqdm(desc=desc, unit='chunk', disable=not progress, leave=False)
    try:
        if workers <= 1:
            for item in items:
                yield func(item)
                bar.update()
            return
        max_pending = max_pending or 2 * workers
        with ProcessPoolExecutor(max_workers=workers) as executor:
            pending = deque()
            for item in items:
                pending.append(executor.submit(func, item))
                if len(pending) >= max_pending:
                    yield pending.popleft().result()
                    bar.update()
            while pending:
                yield pending.popleft().result()
                bar.update()
    finally:
        bar.close()


def chunked(iterable: Iterable[Any], size: int) -> Iterator[List[Any]]:
    iterator = iter(iterable)
    while True:
        chunk = list(itertools.islice(iterator, size))
        if not chunk:
            return
        yield chunk


@dataclass(frozen=True)
class UserProfile:
    """Per-user results of the map stage"""
    user_id: str
    n_events: int
    assignments: Mapping[str, HomeAssignment]
    entropy: EntropyValue


def profile_chunk(chunk: List[Tuple[str, list]], specs, study: StudyConfig) -> List[UserProfile]:
    """Home detection and mobility entropy for one chunk of (user_id, events)"""
    profiles = []
    for user_id, events in chunk:
        assignments = detect_homes(events, specs, study, user_id=user_id)
        entropy = mobility_entropy(visit_distribution(events, user_id))
        profiles.append(UserProfile(user_id, len(events),
                                    {a.heuristic: a for a in assignments}, entropy))
    return profiles


def convert_numpy_types(obj):
    """Make numpy scalars and arrays JSON serializable"""
    if isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        value = float(obj)
        return None if np.isnan(value) else value
    elif isinstance(obj, float) and np.isnan(obj):
        return None
    elif isinstance(obj, np.ndarray):
        return [convert_numpy_types(v) for v in obj.tolist()]
    elif isinstance(obj, Path):
        return str(obj)
    elif isinstance(obj, dict):
        return {str(k): convert_numpy_types(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy_types(item) for item in obj]
    return obj


class CdrPipeline:
    """
    Stages shared by the CLI commands

    Heavy intermediate results (registry, tessellation, user profiles, ...) are
    computed once per pipeline and reused by every command of the run.
    """

    def __init__(self, settings: Dict[str, Dict[str, Any]], out_dir='output', data_dir=None,
                 period: Optional[Tuple[datetime, datetime]] = None):
        self.settings = settings
        self.out_dir = Path(out_dir)
        self.data_dir = Path(data_dir or settings['inputs']['data_dir'] or out_dir)
        study = StudyConfig.from_settings(settings)
        self.study = study.restricted_to(*period) if period else study
        self.period = period
        self.workers = int(settings['pipeline']['workers'])
        self.progress = bool(settings['pipeline']['progress'])
        self.levels = split_list(settings['scales']['levels'])
        self.methods = parse_methods(settings['scales']['methods'], VARIABLE_METHODS)

        self.timings: Dict[str, float] = {}
        self.inputs: Dict[str, str] = {}
        self.rejects: Dict[str, RejectLog] = {}
        self._census: Dict[str, Optional[CensusTable]] = {}
        self._populations: Dict[str, PopulationVector] = {}

        names = split_list(settings['home_detection']['heuristics'])
        self.heuristics = tuple(names)
        self.primary = settings['home_detection']['primary']
        self.home_heuristic = settings['indicators']['home_heuristic']
        self.count_heuristic = settings['scales']['count_heuristic']
        needed = sorted(set(names) | {self.primary, self.home_heuristic, self.count_heuristic})
        self.specs = resolve_heuristics(needed)

        logger.info(f"Pipeline: data {self.data_dir}, outputs {self.out_dir}, window "
                    f"{self.study.start.isoformat()}..{self.study.end.isoformat()}, "
                    f"{self.workers} worker(s)")

    # ------------------------------------------------------------------ plumbing

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        logger.info(f"▶ {name}")
        yield
        elapsed = time.perf_counter() - start
        self.timings[name] = self.timings.get(name, 0.0) + elapsed
        logger.info(f"✓ {name} ({elapsed:.2f}s)")

    def input_path(self, key: str) -> Path:
        return self.data_dir / self.settings['inputs'][key]

    def open(self, path: Path):
        handle = open_input(path)
        self.inputs[str(path)] = sha256_file(path)
        return handle

    def _record_rejects(self, name: str, rejects: Optional[RejectLog]):
        if rejects is None:
            return
        if not rejects.is_balanced():
            raise InvariantViolation(f"{name}: {rejects.lines_read} lines read but {rejects.accepted} "
                                     f"accepted + {rejects.rejected} rejected")
        self.rejects[name] = rejects

    @property
    def period_label(self) -> str:
        return f"{self.study.start.date().isoformat()}..{self.study.end.date().isoformat()}"

    # ------------------------------------------------------------------ inputs and geometry

    @cached_property
    def registry(self) -> TowerRegistry:
        path = self.input_path('towers')
        with self.stage('load towers'), self.open(path) as stream:
            registry = parse_towers(stream, self.study, source=str(path))
        self._record_rejects('towers', registry.rejects)
        return registry

    @cached_property
    def admin(self) -> AdminCollection:
        path = self.input_path('admin')
        lonlat = self.settings['inputs']['admin_coordinates'] == 'lonlat'
        with self.stage('load admin'), self.open(path) as stream:
            admin = parse_admin(stream, self.registry.projection if lonlat else None, source=str(path))
        self._record_rejects('admin', admin.rejects)
        return admin

    def census_path(self, level: str) -> Path:
        if level == 'cell':
            return self.input_path('census')
        return self.data_dir / self.settings['inputs']['census_pattern'].format(level=level)

    def census(self, level: str, required: bool = False) -> Optional[CensusTable]:
        """Census table of a level; None (with a warning) when its file is absent and not required"""
        if self._census.get(level) is not None or (level in self._census and not required):
            return self._census[level]
        path = self.census_path(level)
        if not path.exists() and not required:
            logger.warning(f"No census for level {level!r} ({path}); its rows are reported undefined")
            self._census[level] = None
            return None
        with self.stage(f'load census {level}'), self.open(path) as stream:
            table = parse_census(stream, source=str(path))
        self._record_rejects(f'census_{level}', table.rejects)
        self._census[level] = table
        return table

    @cached_property
    def tessellation(self) -> Tessellation:
        geometry = self.settings['geometry']
        with self.stage('tessellation'):
            return build_voronoi(self.registry, geometry['padding_fraction'], geometry['min_padding_m'])

    @cached_property
    def adjacency(self) -> AdjacencyWeights:
        with self.stage('adjacency'):
            return build_adjacency(self.tessellation, include_self=True)

    @cached_property
    def density(self) -> DensityMap:
        return tower_density(self.tessellation)

    @cached_property
    def crosswalks(self) -> List[Crosswalk]:
        """Crosswalks chaining consecutive levels: cell -> levels[1] -> levels[2] ..."""
        available = self.admin.levels()
        xwalks = []
        with self.stage('crosswalks'):
            for lower, upper in zip(self.levels, self.levels[1:]):
                if upper not in available:
                    raise ConfigError(f"Admin file has no units of level {upper!r}; found {list(available)}")
                source = self.tessellation if lower == 'cell' else self.admin.level(lower)
                xwalk = build_crosswalk(source, self.admin.level(upper), lower, upper)
                if xwalk.uncovered:
                    logger.warning(f"Crosswalk {lower} -> {upper}: {len(xwalk.uncovered)} units "
                                   f"partially covered")
                if xwalk.overcovered:
                    logger.warning(f"Crosswalk {lower} -> {upper}: {len(xwalk.overcovered)} units "
                                   f"covered by overlapping {upper} units")
                xwalks.append(xwalk)
        return xwalks

    @cached_property
    def from_finest(self) -> Dict[str, Crosswalk]:
        if len(self.levels) == 1:
            return {'cell': Crosswalk.identity(self.tessellation.cell_ids, 'cell', self.tessellation.areas())}
        return crosswalks_from_finest(self.levels, self.crosswalks)

    def lonlat_collection(self, geometries: Mapping[str, Any], id_field: str,
                          properties: Optional[Mapping[str, Mapping[str, Any]]] = None,
                          metadata: Optional[Dict[str, Any]] = None) -> dict:
        """GeoJSON FeatureCollection in WGS84 lon/lat from planar geometries"""
        projection = self.registry.projection
        lonlat = {k: projection.inverse_geometry(g) for k, g in geometries.items()}
        meta = dict(metadata or {})
        meta['projection'] = projection.describe()
        meta['crs'] = 'EPSG:4326'
        return feature_collection(lonlat, id_field, properties=properties, metadata=meta)

    # ------------------------------------------------------------------ per-user map stage

    def _profiles(self, grouped: bool) -> List[UserProfile]:
        path = self.input_path('cdr')
        rejects = RejectLog(str(path))
        worker = functools.partial(profile_chunk, specs=self.specs, study=self.study)
        with self.open(path) as stream:
            records = iter_cdr(stream, self.registry, self.study, rejects)
            users = group_by_user(records).items() if grouped else iter_user_events(records)
            chunks = chunked(users, int(self.settings['pipeline']['chunk_users']))
            profiles = [p for batch in ordered_parallel_map(worker, chunks, self.workers,
                                                            desc="Users", progress=self.progress)
                        for p in batch]
        self._record_rejects('cdr', rejects)
        logger.info(f"CDR {path}: {rejects.accepted} events from {len(profiles)} users, "
                    f"{rejects.rejected} rejects {rejects.counts()}")
        return sorted(profiles, key=lambda p: p.user_id)

    @cached_property
    def profiles(self) -> List[UserProfile]:
        streaming = bool(self.settings['inputs']['assume_sorted'])
        with self.stage('user profiles'):
            try:
                return self._profiles(grouped=not streaming)
            except IngestError as e:
                if not streaming:
                    raise
                logger.warning(f"{e}; regrouping the CDR file in memory")
                return self._profiles(grouped=True)

    def homes(self, heuristic: str) -> List[HomeAssignment]:
        return [p.assignments[heuristic] for p in self.profiles]

    def population(self, heuristic: str) -> PopulationVector:
        if heuristic in self._populations:
            return self._populations[heuristic]
        vector = population_vector(self.homes(heuristic), self.registry)
        qualifying = sum(1 for a in self.homes(heuristic) if a.qualifies and a.home_cell is not None)
        if vector.total != qualifying:
            raise InvariantViolation(f"{heuristic}: population vector holds {vector.total} users, "
                                     f"{qualifying} were assigned")
        self._populations[heuristic] = vector
        return vector

    @cached_property
    def entropies(self) -> List[EntropyValue]:
        return [p.entropy for p in self.profiles]

    @cached_property
    def calibration(self) -> CalibrationTable:
        indicators = self.settings['indicators']
        with self.stage('calibration'):
            return calibrate_baseline(self.entropies, self.homes(self.home_heuristic), self.density,
                                      bins=indicators['bins'], min_users=indicators['min_users'])

    @cached_property
    def user_indicators(self) -> pd.DataFrame:
        table = self.calibration
        rows = []
        for profile in self.profiles:
            home = profile.assignments[self.home_heuristic]
            if not home.qualifies or home.home_cell is None:
                continue
            density = self.density[home.home_cell]
            cme = corrected_mobility_entropy(profile.entropy, density, table, user_id=profile.user_id)
            rows.append((profile.user_id, profile.entropy.H, cme.value, home.home_cell, density))
        return pd.DataFrame(rows, columns=['user_id', 'H', 'CME', 'home_cell', 'density'])

    def tower_indicator(self, name: str) -> TowerIndicator:
        if name == 'H':
            values = {e.user_id: e.H for e in self.entropies}
        else:
            frame = self.user_indicators
            values = dict(zip(frame['user_id'], frame['CME']))
        return average_by_home(values, self.homes(self.home_heuristic))

    # ------------------------------------------------------------------ multi-scale variables

    def census_field(self, attribute: Optional[str] = None) -> Dict[str, Dict[str, float]]:
        """Census population (or one attribute) per level, for the levels with a census file"""
        fields = {}
        for level in self.levels:
            table = self.census(level)
            if table is None:
                continue
            fields[level] = table.population() if attribute is None else table.attribute(attribute)
        return fields

    def variable(self, name: str):
        """Field of a report variable: finest-level mapping or per-level census mapping"""
        if name == 'homes':
            return self.population(self.count_heuristic).as_mapping()
        if name == 'population':
            return self.census_field()
        if name in ('H', 'CME'):
            return self.tower_indicator(name).means()
        return self.census_field(name)

    @property
    def home_weights(self) -> Dict[str, float]:
        return self.population(self.home_heuristic).as_mapping()

    def method_of(self, name: str) -> AggregationMethod:
        """Configured aggregation method; census attributes default to the population-weighted mean"""
        return self.methods.get(name, AggregationMethod.POPULATION_WEIGHTED_MEAN)

    def report_pairs(self) -> List[Tuple[str, str]]:
        reference = self.settings['scales']['reference_attribute']
        return [('homes', 'population'), ('H', reference), ('CME', reference)]

    # ------------------------------------------------------------------ commands

    def cmd_synth(self, staged: StagedOutputs, **_) -> Dict[str, Any]:
        """Generate a seeded synthetic world and its CDR stream as ingestible files"""
        world_config = WorldConfig.from_settings(self.settings)
        with self.stage('synth world'):
            world = generate_world(world_config)
        with self.stage('synth cdr'):
            records = generate_cdr(world)

        inputs = self.settings['inputs']
        renamed = {'towers.csv': inputs['towers'], 'cdr.csv': inputs['cdr'], 'admin.geojson': inputs['admin']}
        for name, table in world_tables(world, records, inputs['census_pattern']).items():
            name = renamed.get(name, name)
            if isinstance(table, pd.DataFrame):
                staged.csv(table, name)
            else:
                staged.json(table, name)
        write_config(study_settings(world, self.settings), staged.path('study.ini'))

        return {
            'towers': len(world.registry),
            'users': len(world.truth.homes),
            'events': len(records),
            'admin_units': len(world.admin),
            'urban_intensity_ratio': world.intensity_ratio(),
            'seed': world_config.seed,
        }

    def cmd_ingest_check(self, staged: StagedOutputs, **_) -> Dict[str, Any]:
        """Parse every input, report rejects and export the tessellation artifacts"""
        registry, admin = self.registry, self.admin
        for level in self.levels:
            self.census(level)

        path = self.input_path('cdr')
        rejects = RejectLog(str(path))
        users = set()
        with self.stage('scan cdr'), self.open(path) as stream:
            for record in iter_cdr(stream, registry, self.study, rejects):
                users.add(record.user_id)
        self._record_rejects('cdr', rejects)

        tess = self.tessellation
        density = self.density
        staged.json(self.lonlat_collection(
            tess.cells, 'cell_id',
            properties={c: {'area_km2': tess.area(c) / 1e6, 'density': density[c]} for c in tess.cell_ids},
            metadata=tess.metadata()), 'voronoi.geojson')
        staged.csv(density.to_frame(), 'density.csv')
        staged.csv(self.adjacency.to_frame(), 'adjacency.csv')
        for xwalk in self.crosswalks:
            tag = f"{xwalk.source_level}_{xwalk.target_level}"
            staged.csv(xwalk.to_frame(), f'crosswalk_{tag}.csv')
            staged.csv(xwalk.coverage_frame(), f'coverage_{tag}.csv')

        summary_rows, reject_frames = [], []
        for name in sorted(self.rejects):
            log = self.rejects[name]
            reasons = ';'.join(f"{k}={v}" for k, v in log.counts().items())
            summary_rows.append((name, log.lines_read, log.accepted, log.rejected, reasons))
            frame = log.to_frame()
            frame.insert(0, 'source', name)
            reject_frames.append(frame)
        staged.csv(pd.DataFrame(summary_rows, columns=['source', 'lines_read', 'accepted', 'rejected',
                                                       'reasons']), 'ingest_summary.csv')
        staged.csv(pd.concat(reject_frames, ignore_index=True), 'rejects.csv')

        return {
            'towers': len(registry),
            'cdr_events': rejects.accepted,
            'cdr_users': len(users),
            'admin_units': len(admin),
            'admin_levels': list(admin.levels()),
            'rejected': {name: log.rejected for name, log in sorted(self.rejects.items())},
        }

    def cmd_homes(self, staged: StagedOutputs, **_) -> Dict[str, Any]:
        """Home assignments, population vectors and heuristic agreement"""
        per_heuristic = {name: self.homes(name) for name in self.heuristics}
        rows = [a.to_row() for name in self.heuristics for a in per_heuristic[name]]
        assignments = pd.DataFrame(rows, columns=ASSIGNMENT_COLUMNS)
        staged.csv(assignments.sort_values(['user_id', 'heuristic'], kind='mergesort'), 'assignments.csv')

        summary: Dict[str, Any] = {'users': len(self.profiles), 'heuristics': {}}
        for name in self.heuristics:
            vector = self.population(name)
            staged.csv(vector.to_frame(), f'population_{name}.csv')
            qualifying = sum(1 for a in per_heuristic[name] if a.qualifies)
            summary['heuristics'][name] = {'qualifying': qualifying, 'assigned': vector.total}

        if len(self.heuristics) > 1:
            matrix = agreement_matrix(per_heuristic)
            staged.csv(matrix.rename_axis('heuristic').reset_index(), 'agreement.csv')
            consensus = heuristic_consensus(per_heuristic)
            staged.csv(consensus, 'consensus.csv')
            summary['vulnerable_users'] = int(consensus['vulnerable'].sum())
        return summary

    def cmd_indicators(self, staged: StagedOutputs, kind: str = 'cme', **_) -> Dict[str, Any]:
        """Per-user entropy (and CME) with tower averages"""
        entropy = pd.DataFrame([(e.user_id, e.H, e.support, e.normalized) for e in self.entropies],
                               columns=['user_id', 'H', 'support', 'H_normalized'])
        staged.csv(entropy, 'entropy.csv')
        staged.csv(self.tower_indicator('H').to_frame(), 'tower_entropy.csv')
        summary: Dict[str, Any] = {'users': len(entropy),
                                   'mean_H': float(entropy['H'].mean()) if len(entropy) else None}
        if kind == 'cme':
            table = self.calibration
            staged.csv(self.user_indicators, 'user_indicators.csv')
            staged.csv(table.to_frame(), 'calibration.csv')
            staged.csv(self.tower_indicator('CME').to_frame(), 'tower_cme.csv')
            summary['calibrated_users'] = len(self.user_indicators)
            summary['bins'] = len(table)
        return summary

    def cmd_validate(self, staged: StagedOutputs, kind: str = 'cosine', **_) -> Dict[str, Any]:
        if kind == 'cosine':
            return self._validate_cosine(staged)
        return self._validate_hotspots(staged)

    def _validate_cosine(self, staged: StagedOutputs) -> Dict[str, Any]:
        """Angle between detected-home and census population vectors, per heuristic and level"""
        rows = []
        for level in self.levels:
            table = self.census(level)
            if table is None:
                continue
            census = table.population()
            for name in self.heuristics:
                detected = aggregate(self.population(name).as_mapping(), self.from_finest[level],
                                     AggregationMethod.SUM)
                units = sorted(set(census) | set(detected))
                extra = len(set(detected) - set(census))
                if extra:
                    logger.warning(f"{level}: {extra} units with detected homes have no census row")
                angle = cosine_degrees({u: detected.get(u, 0.0) for u in units},
                                       {u: census.get(u, 0.0) for u in units})
                rows.append((self.period_label, name, level, angle, len(units)))
                logger.info(f"{name} vs census at {level}: {angle:.3f}°")
        frame = pd.DataFrame(rows, columns=['period', 'heuristic', 'level', 'angle_deg', 'n_units'])
        staged.csv(frame, 'cosine.csv')
        return {'angles': {f"{r[1]}@{r[2]}": r[3] for r in rows}}

    def _cell_census(self) -> Dict[str, float]:
        census = self.census('cell', required=True).population()
        missing = [c for c in self.tessellation.cell_ids if c not in census]
        if missing:
            logger.warning(f"Cell census lacks {len(missing)} towers; counted as 0")
        return {c: census.get(c, 0.0) for c in self.tessellation.cell_ids}

    def _validate_hotspots(self, staged: StagedOutputs) -> Dict[str, Any]:
        """G_i* hot and cold spots of detected homes and of the census, and their agreement"""
        z_crit = self.settings['spatial_stats']['z_crit']
        with self.stage('hotspots'):
            results: Dict[str, GiStarResult] = {
                'homes': getis_ord_gi_star(self.population(self.primary).as_mapping(), self.adjacency, z_crit),
                'census': getis_ord_gi_star(self._cell_census(), self.adjacency, z_crit),
            }
        projection = self.registry.projection
        lonlat = {c: projection.inverse_geometry(g) for c, g in self.tessellation.cells.items()}
        for name, result in results.items():
            staged.csv(result.to_frame(), f'hotspots_{name}.csv')
            staged.json(result.to_geojson(lonlat, metadata={'crs': 'EPSG:4326', 'z_crit': z_crit,
                                                            'heuristic': self.primary,
                                                            'projection': projection.describe()}),
                        f'hotspots_{name}.geojson')
        agreement = hotspot_agreement(results['homes'], results['census'])
        staged.csv(pd.DataFrame([(self.period_label, self.primary, agreement.hot_jaccard,
                                  agreement.cold_jaccard)],
                                columns=['period', 'heuristic', 'hot_jaccard', 'cold_jaccard']),
                   'hotspot_agreement.csv')
        confusion = agreement.confusion.rename_axis(index='homes', columns=None).reset_index()
        staged.csv(confusion, 'hotspot_confusion.csv')
        return {
            'hot_homes': len(results['homes'].hot()), 'cold_homes': len(results['homes'].cold()),
            'hot_census': len(results['census'].hot()), 'cold_census': len(results['census'].cold()),
            'hot_jaccard': agreement.hot_jaccard, 'cold_jaccard': agreement.cold_jaccard,
        }

    def cmd_aggregate(self, staged: StagedOutputs, level: Optional[str] = None, **_) -> Dict[str, Any]:
        """Detected homes and tower-averaged indicators aggregated onto one admin level"""
        targets = [level] if level else list(self.levels[1:])
        summary = {}
        for target in targets:
            if target not in self.levels:
                raise ConfigError(f"Level {target!r} is not among the configured levels {list(self.levels)}")
            xwalk = self.from_finest[target]
            columns = {name: aggregate(self.variable(name), xwalk, self.method_of(name), self.home_weights)
                       for name in ('homes', 'H', 'CME')}
            units = sorted(set().union(*columns.values()))
            frame = pd.DataFrame({'unit_id': units})
            for name, values in columns.items():
                frame[name] = [values.get(u, np.nan) for u in units]
            staged.csv(frame, f'aggregate_{target}.csv')
            staged.csv(xwalk.to_frame(), f'crosswalk_cell_{target}.csv')

            total = sum(self.variable('homes').values())
            summed = self.method_of('homes') is AggregationMethod.SUM
            if summed and xwalk.full_coverage and abs(frame['homes'].sum() - total) > 1e-9 * max(total, 1.0):
                raise InvariantViolation(f"Aggregating homes onto {target} changed the total "
                                         f"({total} -> {frame['homes'].sum()})")
            summary[target] = {'units': len(units), 'homes': float(frame['homes'].sum())}
        return summary

    def correlation_report(self) -> MultiScaleReport:
        threshold = self.settings['scales']['delta_threshold']
        reports = []
        with self.stage('correlate'):
            for a, b in self.report_pairs():
                reports.append(multi_scale_correlate(
                    self.variable(a), self.variable(b), self.crosswalks, self.levels,
                    methods=(self.method_of(a), self.method_of(b)),
                    weights=self.home_weights, names=(a, b), threshold=threshold))
        return MultiScaleReport.combine(reports)

    def cmd_correlate(self, staged: StagedOutputs, **_) -> Dict[str, Any]:
        report = self.correlation_report()
        staged.csv(report.to_frame(), 'correlations.csv')
        staged.csv(report.differences_frame(), 'scale_differences.csv')
        return {
            'pairs': list(report.pairs()),
            'flagged': [f"{c.pair}: {c.level_a}->{c.level_b} {c.delta_r:+.3f}"
                        for c in report.changes() if c.flag],
        }

    def write_sensitivity(self, staged: StagedOutputs) -> Dict[str, Any]:
        """Per-level summary of every indicator against the reference attribute"""
        reference = self.settings['scales']['reference_attribute']
        threshold = self.settings['scales']['delta_threshold']
        frames, flags = [], []
        for name in ('homes', 'H', 'CME'):
            report = sensitivity_report(self.variable(name), self.crosswalks, self.levels,
                                        method=self.method_of(name), reference=self.variable(reference),
                                        weights=self.home_weights, threshold=threshold, name=name)
            frames.append(report.to_frame())
            flags.extend((c.pair, c.level_a, c.level_b, c.delta_r, c.flag) for c in report.changes)
        staged.csv(pd.concat(frames, ignore_index=True), 'sensitivity.csv')
        staged.csv(pd.DataFrame(flags, columns=['variable', 'level_a', 'level_b', 'delta_r', 'flag']),
                   'sensitivity_flags.csv')
        return {'flagged': sum(1 for f in flags if f[4])}

    def cmd_report(self, staged: StagedOutputs, **_) -> Dict[str, Any]:
        """Every stage in one run"""
        return {
            'homes': self.cmd_homes(staged),
            'indicators': self.cmd_indicators(staged, kind='cme'),
            'cosine': self.cmd_validate(staged, kind='cosine'),
            'hotspots': self.cmd_validate(staged, kind='hotspots'),
            'aggregate': self.cmd_aggregate(staged),
            'correlate': self.cmd_correlate(staged),
            'sensitivity': self.write_sensitivity(staged),
        }

    # ------------------------------------------------------------------ run

    def manifest(self, command: str, outputs: Dict[str, str], summary: Dict[str, Any]) -> Dict[str, Any]:
        return convert_numpy_types({
            'command': command,
            'created': datetime.now(timezone.utc).isoformat(timespec='seconds'),
            'period': [self.study.start.isoformat(), self.study.end.isoformat()],
            'config': self.settings,
            'inputs': dict(sorted(self.inputs.items())),
            'versions': {
                'python': platform.python_version(),
                'numpy': np.__version__,
                'pandas': pd.__version__,
                'scipy': scipy.__version__,
                'shapely': shapely.__version__,
                'pyproj': pyproj.__version__,
                'tqdm': tqdm_module.__version__,
            },
            'timings': {name: round(seconds, 4) for name, seconds in self.timings.items()},
            'outputs': outputs,
            'summary': summary,
        })

    def run(self, command: str, **options) -> Dict[str, Any]:
        """
        Run one command, then promote its outputs with manifest-<command>.json

        The manifest is staged beside the outputs and moved last, so a manifest
        in the output directory always describes files already there.

        Returns:
            The manifest dictionary
        """
        handler = getattr(self, f"cmd_{command.replace('-', '_')}", None)
        if handler is None:
            raise ConfigError(f"Unknown command: {command}")

        start = time.perf_counter()
        manifest_name = f"manifest-{command}.json"
        with StagedOutputs(self.out_dir, command) as staged:
            summary = handler(staged, **options)
            outputs = staged.digests()
            self.timings['total'] = time.perf_counter() - start
            manifest = self.manifest(command, outputs, summary)
            staged.json(manifest, manifest_name)
            staged.promote(last=manifest_name)

        logger.info(f"✓ {command}: {len(outputs)} files in {self.out_dir} "
                    f"({self.timings['total']:.2f}s)")
        return manifest
