"""
Shared fixtures: a small study window, event builders and a small synthetic world
"""

import os
import sys
from datetime import datetime, timezone

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from config import StudyConfig, load_config  # noqa: E402
from ingest.cdr_reader import parse_timestamp  # noqa: E402
from ingest.records import CdrRecord  # noqa: E402
from synth import WorldConfig, generate_cdr, generate_world  # noqa: E402

SMALL_WORLD = dict(seed=11, extent_km=20.0, n_towers=80, urban_radius_km=4.0, n_users=300, days=14,
                   events_per_day=8.0, communes_per_side=2, iris_per_commune_side=2)


@pytest.fixture
def utc_study():
    """June 2007, local time = UTC, default thresholds"""
    return StudyConfig(start=datetime(2007, 6, 1, tzinfo=timezone.utc),
                       end=datetime(2007, 7, 1, tzinfo=timezone.utc), utc_offset_hours=0.0)


def event(user_id, stamp, cell_id):
    return CdrRecord(user_id, parse_timestamp(stamp), cell_id)


@pytest.fixture
def make_events():
    """Build CdrRecords from (ISO timestamp, cell_id) pairs"""
    def build(pairs, user_id='u1'):
        return [event(user_id, stamp, cell) for stamp, cell in pairs]
    return build


@pytest.fixture(scope='session')
def small_world():
    return generate_world(WorldConfig(**SMALL_WORLD))


@pytest.fixture(scope='session')
def small_records(small_world):
    return generate_cdr(small_world)


def small_world_settings(out_dir, **sections):
    """Settings for a pipeline run over a small synthetic world written to out_dir"""
    overrides = {'synth': dict(SMALL_WORLD), 'indicators': {'min_users': 20},
                 'pipeline': {'progress': False}, 'study': {'end': '2007-06-15T00:00:00Z'}}
    for section, values in sections.items():
        overrides.setdefault(section, {}).update(values)
    return load_config(None, overrides)


@pytest.fixture(scope='session')
def world_dir(tmp_path_factory):
    """A small synthetic world generated once through the pipeline"""
    from pipeline import CdrPipeline

    out_dir = tmp_path_factory.mktemp('world')
    settings = small_world_settings(out_dir)
    CdrPipeline(settings, out_dir=out_dir).run('synth')
    return out_dir
