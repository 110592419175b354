"""
Input parsing: CDR events, tower registry, census tables and admin polygons
"""

from .records import (CdrRecord, RejectLog, TowerRegistry, TowerSite, CensusTable, CensusRow,
                      AdminGeometry, AdminCollection)
from .projection import Projection
from .cdr_reader import parse_cdr, iter_cdr, iter_user_events, group_by_user, parse_timestamp
from .towers import parse_towers, build_registry
from .census import parse_census
from .admin import parse_admin

__all__ = [
    'CdrRecord', 'RejectLog', 'TowerRegistry', 'TowerSite', 'CensusTable', 'CensusRow',
    'AdminGeometry', 'AdminCollection', 'Projection', 'parse_cdr', 'iter_cdr',
    'iter_user_events', 'group_by_user', 'parse_timestamp', 'parse_towers', 'build_registry',
    'parse_census', 'parse_admin',
]
