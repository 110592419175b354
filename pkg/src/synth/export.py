"""
Synthetic world -> the ingest file formats
"""

import copy
from typing import Any, Dict, Iterable, Mapping

import pandas as pd

from ingest.records import CdrRecord
from synth.cdr_generator import records_frame
from synth.world import World, admin_geojson


def study_settings(world: World, settings: Mapping[str, Mapping[str, Any]]) -> Dict[str, Dict[str, Any]]:
    """Settings that re-ingest the generated files with the generator's window and projection"""
    cfg = world.config
    result = {section: dict(values) for section, values in copy.deepcopy(dict(settings)).items()}
    result['study']['start'] = cfg.start.strftime('%Y-%m-%dT%H:%M:%SZ')
    result['study']['end'] = cfg.end.strftime('%Y-%m-%dT%H:%M:%SZ')
    result['study']['utc_offset_hours'] = float(cfg.utc_offset_hours)
    result['study']['projection_origin'] = f"{cfg.origin_lon!r},{cfg.origin_lat!r}"
    result['inputs']['data_dir'] = ''
    result['inputs']['admin_coordinates'] = 'lonlat'
    for key in result['synth']:
        if hasattr(cfg, key):
            result['synth'][key] = getattr(cfg, key)
    return result


def world_tables(world: World, records: Iterable[CdrRecord],
                 census_pattern: str = 'census_{level}.csv') -> Dict[str, Any]:
    """File name -> DataFrame (CSV) or dict (GeoJSON) for every generated input"""
    tables: Dict[str, Any] = {
        'towers.csv': world.registry.to_frame()[['cell_id', 'lon', 'lat']],
        'cdr.csv': records_frame(records),
        'admin.geojson': admin_geojson(world),
        'ground_truth.csv': pd.DataFrame(sorted(world.truth.homes.items()), columns=['user_id', 'home_cell']),
    }
    for level, table in world.census.items():
        tables[census_pattern.format(level=level)] = table.to_frame()
    return tables
