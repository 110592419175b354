import io
import json
import math
import time
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from shapely.geometry import Polygon

from errors import DuplicateTowerError, IngestError
from home_detection import detect_homes, resolve_heuristics
from ingest import (Projection, RejectLog, build_registry, group_by_user, iter_cdr, iter_user_events,
                    parse_admin, parse_cdr, parse_census, parse_timestamp, parse_towers)
from ingest.records import CdrRecord


def haversine_m(lon1, lat1, lon2, lat2, radius=6371007.181):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * radius * math.asin(math.sqrt(a))


@pytest.fixture
def registry():
    return build_registry([('c41', 2.30, 48.80), ('c42', 2.35, 48.85), ('c43', 2.40, 48.90)])


def cdr_stream(*lines):
    return io.StringIO('\n'.join(['user_id,timestamp,cell_id', *lines]) + '\n')


class TestParseCdr:
    def test_well_formed_line(self, registry, utc_study):
        records, rejects = parse_cdr(cdr_stream('u1,2007-06-03T21:15:00Z,c42'), registry, utc_study)
        assert records == [CdrRecord('u1', parse_timestamp('2007-06-03T21:15:00Z'), 'c42')]
        assert rejects.rejected == 0

    def test_bad_timestamp(self, registry, utc_study):
        records, rejects = parse_cdr(cdr_stream('u1,notatime,c42'), registry, utc_study)
        assert records == []
        assert rejects.counts() == {'bad_timestamp': 1}

    def test_unknown_cell_among_three(self, registry, utc_study):
        lines = ['u1,2007-06-03T21:15:00Z,c42', 'u1,2007-06-03T22:15:00Z,c99', 'u2,2007-06-04T08:00:00Z,c41']
        records, rejects = parse_cdr(cdr_stream(*lines), registry, utc_study)
        assert len(records) == 2
        assert rejects.counts() == {'unknown_cell': 1}
        assert [r.line_number for r in rejects] == [3]
        assert rejects.lines_read == rejects.accepted + rejects.rejected == 3

    def test_every_reason_code_and_conservation(self, registry, utc_study):
        lines = ['u1,2007-06-03T21:15:00Z,c42',
                 'u1,2007-06-03T21:15:00,c42',
                 'u1,2007-08-03T21:15:00Z,c42',
                 'u1,2007-06-03T21:15:00Z',
                 ',2007-06-03T21:15:00Z,c42',
                 'u1,2007-06-03T23:15:00+02:00,c43']
        records, rejects = parse_cdr(cdr_stream(*lines), registry, utc_study)
        assert len(records) == 2
        assert rejects.counts() == {'bad_timestamp': 1, 'malformed': 2, 'out_of_window': 1}
        assert rejects.is_balanced()

    def test_offset_timestamps_normalized_to_utc(self, registry, utc_study):
        records, _ = parse_cdr(cdr_stream('u1,2007-06-03T23:15:00+02:00,c43'), registry, utc_study)
        assert records[0].timestamp == parse_timestamp('2007-06-03T21:15:00Z')

    @pytest.mark.parametrize('text, expected', [
        ('2007-06-03T21:15:07Z', 1180905307),
        ('2007-06-03t21:15:07z', 1180905307),
        ('2007-06-03T23:15:07+02:00', 1180905307),
        ('2007-06-03T15:45:07-05:30', 1180905307),
        ('2007-06-03T21:15:07.250Z', 1180905307),
        ('  2007-06-03T21:15:07Z ', 1180905307),
        ('2007-06-03T21:60:00Z', None),
        ('2007-06-03T24:15:00Z', None),
        ('2007-06-03T21:15:61Z', None),
        ('2007-02-30T21:15:00Z', None),
        ('2007-06-03T21:15:00+25:00', None),
        ('2007-06-03T21:15:00', None),
        ('', None),
    ])
    def test_timestamp_forms(self, text, expected):
        assert parse_timestamp(text) == expected

    def test_whole_second_stamps_match_datetime(self):
        rng = np.random.default_rng(23)
        base = datetime(2007, 1, 1, tzinfo=timezone.utc)
        for _ in range(2000):
            instant = base + timedelta(seconds=int(rng.integers(0, 366 * 86400)))
            offset = timedelta(minutes=15 * int(rng.integers(-48, 57)))
            stamp = instant.astimezone(timezone(offset)).isoformat()
            assert parse_timestamp(stamp) == int(instant.timestamp())

    def test_window_is_half_open(self, registry, utc_study):
        lines = ['u1,2007-06-01T00:00:00Z,c42', 'u1,2007-07-01T00:00:00Z,c42']
        records, rejects = parse_cdr(cdr_stream(*lines), registry, utc_study)
        assert len(records) == 1
        assert rejects.counts() == {'out_of_window': 1}

    def test_missing_header(self, registry, utc_study):
        with pytest.raises(IngestError):
            parse_cdr(io.StringIO('u1,2007-06-03T21:15:00Z,c42\n'), registry, utc_study)

    def test_bom_header_accepted(self, registry, utc_study):
        stream = io.StringIO('\ufeffuser_id,timestamp,cell_id\nu1,2007-06-03T21:15:00Z,c42\n')
        records, _ = parse_cdr(stream, registry, utc_study)
        assert len(records) == 1


class TestUserGrouping:
    def test_contiguous_stream(self):
        records = [CdrRecord('a', 1, 'c1'), CdrRecord('a', 2, 'c1'), CdrRecord('b', 1, 'c2')]
        assert [(u, len(e)) for u, e in iter_user_events(records)] == [('a', 2), ('b', 1)]

    def test_non_contiguous_stream_raises(self):
        records = [CdrRecord('a', 1, 'c1'), CdrRecord('b', 1, 'c2'), CdrRecord('a', 2, 'c1')]
        with pytest.raises(IngestError, match='a reappears'):
            list(iter_user_events(records))

    def test_group_by_user_sorts_users(self):
        records = [CdrRecord('b', 1, 'c2'), CdrRecord('a', 1, 'c1'), CdrRecord('b', 2, 'c1')]
        grouped = group_by_user(records)
        assert list(grouped) == ['a', 'b']
        assert len(grouped['b']) == 2

    def test_streaming_reader_feeds_grouping(self, registry, utc_study):
        rejects = RejectLog('cdr')
        stream = cdr_stream('u1,2007-06-03T21:15:00Z,c42', 'u1,2007-06-03T22:15:00Z,c41',
                            'u2,2007-06-04T08:00:00Z,c41')
        users = dict(iter_user_events(iter_cdr(stream, registry, utc_study, rejects)))
        assert sorted(users) == ['u1', 'u2']
        assert rejects.accepted == 3


def million_line_stream(n_users=10 ** 4, per_user=100, n_cells=100):
    rng = np.random.default_rng(31)
    cells = [f"c{k:03d}" for k in range(n_cells)]
    registry = build_registry([(c, 2.0 + 0.01 * k, 48.0 + 0.005 * (k % 10)) for k, c in enumerate(cells)])
    start = datetime(2007, 6, 1, tzinfo=timezone.utc)
    offsets = np.sort(rng.integers(0, 30 * 86400, size=(n_users, per_user)), axis=1)
    stamps = {int(s): (start + timedelta(seconds=int(s))).strftime('%Y-%m-%dT%H:%M:%SZ')
              for s in np.unique(offsets)}
    picks = rng.integers(0, n_cells, size=(n_users, per_user))
    lines = [f"u{u:05d},{stamps[int(offsets[u, k])]},{cells[picks[u, k]]}"
             for u in range(n_users) for k in range(per_user)]
    return registry, cdr_stream(*lines)


@pytest.mark.slow
class TestThroughput:
    """A 4-core machine must handle 10^7 events in 60 s, i.e. 10^6 per 6 s per core"""

    def test_reader_keeps_pace(self, utc_study):
        registry, stream = million_line_stream()
        rejects = RejectLog('cdr')
        start = time.perf_counter()
        count = sum(1 for _ in iter_cdr(stream, registry, utc_study, rejects))
        elapsed = time.perf_counter() - start
        assert count == rejects.accepted == 10 ** 6
        assert elapsed <= 6.0

    def test_detection_keeps_pace(self, utc_study):
        registry, stream = million_line_stream()
        specs = resolve_heuristics('all')
        start = time.perf_counter()
        users = iter_user_events(iter_cdr(stream, registry, utc_study, RejectLog('cdr')))
        homes = [detect_homes(events, specs, utc_study, user_id=user) for user, events in users]
        elapsed = time.perf_counter() - start
        assert len(homes) == 10 ** 4
        assert elapsed <= 4 * 6.0


class TestTowers:
    def test_origin_projects_to_zero(self):
        registry = build_registry([('c1', 2.35, 48.85)], origin=(2.35, 48.85))
        assert registry['c1'].x == pytest.approx(0.0, abs=1e-6)
        assert registry['c1'].y == pytest.approx(0.0, abs=1e-6)

    def test_duplicate_id_names_the_id(self):
        stream = io.StringIO('cell_id,lon,lat\nc7,2.0,45.0\nc7,2.1,45.0\n')
        with pytest.raises(DuplicateTowerError, match='c7'):
            parse_towers(stream)

    def test_planar_distance_matches_great_circle(self):
        registry = build_registry([('a', 0.0, 45.0), ('b', 0.01, 45.0)], origin=(0.005, 45.0))
        planar = math.dist((registry['a'].x, registry['a'].y), (registry['b'].x, registry['b'].y))
        assert planar == pytest.approx(haversine_m(0.0, 45.0, 0.01, 45.0), rel=0.01)
        assert planar == pytest.approx(786, rel=0.01)

    def test_bad_coordinates_rejected(self):
        stream = io.StringIO('cell_id,lon,lat\nc1,2.0,45.0\nc2,abc,45.0\nc3,2.0,95.0\nc4,2.0\n')
        registry = parse_towers(stream)
        assert registry.cell_ids == ('c1',)
        assert registry.rejects.counts() == {'bad_coordinate': 2, 'malformed': 1}

    def test_centroid_projection_by_default(self):
        registry = build_registry([('a', 2.0, 48.0), ('b', 3.0, 48.0)])
        assert registry.projection == Projection(2.5, 48.0)
        assert registry['a'].x == pytest.approx(-registry['b'].x, rel=1e-9)


def unit_vector(lon, lat):
    lon, lat = math.radians(lon), math.radians(lat)
    return np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])


def great_circle_ring(vertices, steps=256):
    """Lon/lat ring following great-circle arcs between consecutive vertices"""
    ring = []
    for a, b in zip(vertices, vertices[1:] + vertices[:1]):
        u, v = unit_vector(*a), unit_vector(*b)
        omega = math.acos(float(np.clip(u @ v, -1.0, 1.0)))
        for t in np.linspace(0.0, 1.0, steps, endpoint=False):
            p = (math.sin((1 - t) * omega) * u + math.sin(t * omega) * v) / math.sin(omega)
            ring.append((math.degrees(math.atan2(p[1], p[0])), math.degrees(math.asin(p[2]))))
    return ring


def spherical_triangle_area(vertices, radius=6371007.181):
    """R^2 times the spherical excess (L'Huilier)"""
    u = [unit_vector(*v) for v in vertices]
    a, b, c = (math.acos(float(np.clip(u[i] @ u[j], -1.0, 1.0))) for i, j in ((1, 2), (0, 2), (0, 1)))
    s = (a + b + c) / 2
    excess = 4 * math.atan(math.sqrt(math.tan(s / 2) * math.tan((s - a) / 2) * math.tan((s - b) / 2)
                                     * math.tan((s - c) / 2)))
    return radius ** 2 * excess


class TestProjectionArea:
    def test_triangles_match_spherical_excess(self):
        projection = Projection(2.35, 48.85)
        rng = np.random.default_rng(17)
        for _ in range(20):
            vertices = [(2.35 + rng.uniform(-4.5, 4.5), 48.85 + rng.uniform(-3.0, 3.0)) for _ in range(3)]
            oracle = spherical_triangle_area(vertices)
            if oracle < 1e8:
                continue
            planar = projection.forward_geometry(Polygon(great_circle_ring(vertices))).area
            assert planar == pytest.approx(oracle, rel=5e-3)

    def test_lonlat_box_matches_zone_formula(self):
        projection = Projection(2.35, 48.85)
        west, east, south, north = -2.0, 7.0, 45.0, 52.0
        lons, lats = np.linspace(west, east, 400), np.linspace(south, north, 400)
        ring = ([(lon, south) for lon in lons] + [(east, lat) for lat in lats]
                + [(lon, north) for lon in lons[::-1]] + [(west, lat) for lat in lats[::-1]])
        oracle = (6371007.181 ** 2 * math.radians(east - west)
                  * (math.sin(math.radians(north)) - math.sin(math.radians(south))))
        assert projection.forward_geometry(Polygon(ring)).area == pytest.approx(oracle, rel=5e-3)


class TestCensus:
    def test_direct_field_mapping(self):
        table = parse_census(io.StringIO('unit_id,population,EDI\niris_001,1250,0.34\n'))
        assert table.population() == {'iris_001': 1250.0}
        assert table.attribute('EDI') == {'iris_001': 0.34}

    def test_header_only(self):
        table = parse_census(io.StringIO('unit_id,population,EDI\n'))
        assert len(table) == 0

    def test_row_rejects(self):
        text = ('unit_id,population,EDI\n'
                'a,10,0.1\n'
                'b,-5,0.2\n'
                'c,7,high\n'
                'a,3,0.3\n')
        table = parse_census(io.StringIO(text))
        assert table.population() == {'a': 10.0}
        assert table.rejects.counts() == {'bad_attribute': 1, 'duplicate_unit': 1, 'negative_population': 1}

    def test_unknown_attribute(self):
        table = parse_census(io.StringIO('unit_id,population\na,1\n'))
        with pytest.raises(KeyError):
            table.attribute('EDI')


def admin_document(*features):
    return io.StringIO(json.dumps({'type': 'FeatureCollection', 'features': list(features)}))


def square_feature(unit_id, level, x0, y0, size, close=True):
    ring = [[x0, y0], [x0 + size, y0], [x0 + size, y0 + size], [x0, y0 + size]]
    if close:
        ring.append([x0, y0])
    return {'type': 'Feature', 'properties': {'unit_id': unit_id, 'level': level},
            'geometry': {'type': 'Polygon', 'coordinates': [ring]}}


class TestAdmin:
    def test_unclosed_ring_rejected(self):
        admin = parse_admin(admin_document(square_feature('a', 'iris', 0, 0, 10, close=False)))
        assert len(admin) == 0
        assert admin.rejects.counts() == {'unclosed_ring': 1}

    def test_planar_units_by_level(self):
        admin = parse_admin(admin_document(square_feature('i1', 'iris', 0, 0, 10),
                                           square_feature('i2', 'iris', 10, 0, 10),
                                           square_feature('m1', 'commune', 0, 0, 20)))
        assert admin.levels() == ('commune', 'iris')
        assert [u.unit_id for u in admin.level('iris')] == ['i1', 'i2']
        assert admin.level('iris')[0].polygon.area == pytest.approx(100.0)

    def test_missing_property_and_bad_geometry(self):
        no_level = square_feature('x', '', 0, 0, 1)
        bowtie = {'type': 'Feature', 'properties': {'unit_id': 'b', 'level': 'iris'},
                  'geometry': {'type': 'Polygon', 'coordinates': [[[0, 0], [1, 1], [1, 0], [0, 1], [0, 0]]]}}
        point = {'type': 'Feature', 'properties': {'unit_id': 'p', 'level': 'iris'},
                 'geometry': {'type': 'Point', 'coordinates': [0, 0]}}
        admin = parse_admin(admin_document(no_level, bowtie, point))
        assert admin.rejects.counts() == {'invalid_polygon': 2, 'missing_property': 1}
        assert admin.rejects.is_balanced()

    def test_lonlat_units_projected(self):
        projection = Projection(2.35, 48.85)
        admin = parse_admin(admin_document(square_feature('m', 'commune', 2.30, 48.80, 0.1)), projection)
        polygon = admin.level('commune')[0].polygon
        assert polygon.contains(projection_point(projection, 2.35, 48.85))
        assert 5e7 < polygon.area < 1e8

    def test_level_outside_known_set_rejected(self):
        admin = parse_admin(admin_document(square_feature('d1', 'department', 0, 0, 10),
                                           square_feature('k1', 'custom:canton', 0, 0, 10),
                                           square_feature('k2', 'custom', 0, 0, 10),
                                           square_feature('k3', 'custom:', 0, 0, 10)))
        assert admin.levels() == ('custom', 'custom:canton')
        assert admin.rejects.counts() == {'invalid_level': 2}
        assert [r.line_number for r in admin.rejects] == [1, 4]
        assert admin.rejects.is_balanced()

    def test_not_a_feature_collection(self):
        with pytest.raises(IngestError):
            parse_admin(io.StringIO('{"type": "Feature"}'))


def projection_point(projection, lon, lat):
    from shapely.geometry import Point
    return Point(*projection.forward(lon, lat))
