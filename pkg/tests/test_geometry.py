import numpy as np
import pytest
import shapely
from shapely.geometry import box

from errors import GeometryError, InsufficientDataError
from geometry import (AdjacencyWeights, Crosswalk, Tessellation, build_adjacency, build_crosswalk,
                      build_voronoi, tower_density)
from ingest.records import AdminGeometry, TowerRegistry


def planar_registry(sites):
    return TowerRegistry.from_planar(sites)


def grid_registry(n, spacing=1000.0):
    return planar_registry({f"t{i}{j}": (i * spacing, j * spacing) for i in range(n) for j in range(n)})


class TestVoronoi:
    def test_single_tower_fills_padded_bbox(self):
        tess = build_voronoi(planar_registry({'a': (0.0, 0.0)}), padding_fraction=0.1, min_padding_m=1000.0)
        assert tess.bbox == (-1000.0, -1000.0, 1000.0, 1000.0)
        assert tess.area('a') == pytest.approx(4e6)

    def test_two_towers_split_by_bisector(self):
        tess = build_voronoi(planar_registry({'a': (0.0, 0.0), 'b': (100.0, 0.0)}))
        assert tess.area('a') == pytest.approx(tess.area('b'), rel=1e-9)
        assert tess.cells['a'].bounds[2] == pytest.approx(50.0)

    def test_square_corners_equal_areas(self):
        tess = build_voronoi(planar_registry({'a': (0, 0), 'b': (1, 0), 'c': (0, 1), 'd': (1, 1)}))
        areas = list(tess.areas().values())
        assert max(areas) == pytest.approx(min(areas), rel=1e-9)

    def test_cells_partition_the_bbox(self):
        rng = np.random.default_rng(5)
        sites = {f"c{k:02d}": tuple(p) for k, p in enumerate(rng.uniform(0, 5000, size=(40, 2)))}
        tess = build_voronoi(planar_registry(sites))
        assert sum(tess.areas().values()) == pytest.approx(tess.bbox_polygon.area, rel=1e-9)
        for cell_id, (x, y) in tess.sites.items():
            assert tess.cells[cell_id].covers(shapely.Point(x, y))

    @pytest.mark.parametrize('n', [3, 200, pytest.param(10 ** 4, marks=pytest.mark.slow)])
    def test_partition_at_scale(self, n):
        rng = np.random.default_rng(n)
        sites = {f"c{k:05d}": tuple(p) for k, p in enumerate(rng.uniform(0, 100000, size=(n, 2)))}
        tess = build_voronoi(planar_registry(sites))
        assert len(tess) == n
        assert sum(tess.areas().values()) == pytest.approx(tess.bbox_polygon.area, rel=1e-6)
        cells = [tess.cells[c] for c in tess.cell_ids]
        union = shapely.union_all(cells)
        assert union.area == pytest.approx(tess.bbox_polygon.area, rel=1e-6)

    def test_enclosing_cell_holds_the_nearest_site(self):
        rng = np.random.default_rng(13)
        sites = {f"c{k:02d}": tuple(p) for k, p in enumerate(rng.uniform(0, 20000, size=(60, 2)))}
        tess = build_voronoi(planar_registry(sites))
        minx, miny, maxx, maxy = tess.bbox
        x = rng.uniform(minx, maxx, 1000)
        y = rng.uniform(miny, maxy, 1000)

        ids = tess.cell_ids
        seeds = np.array([tess.sites[c] for c in ids])
        distances = np.hypot(x[:, None] - seeds[None, :, 0], y[:, None] - seeds[None, :, 1])
        ranked = np.sort(distances, axis=1)
        clear = ranked[:, 1] - ranked[:, 0] > 1e-6
        nearest = distances.argmin(axis=1)

        inside = np.array([shapely.contains_xy(tess.cells[c], x, y) for c in ids])
        assert clear.sum() > 990
        for k in np.flatnonzero(clear):
            assert inside[:, k].sum() == 1
            assert ids[int(inside[:, k].argmax())] == ids[nearest[k]]

    def test_locate_returns_enclosing_cell(self):
        tess = build_voronoi(grid_registry(3))
        assert tess.locate([(10.0, 20.0), (1990.0, 1010.0)]) == ['t00', 't21']

    def test_duplicate_sites_perturbed(self):
        tess = build_voronoi(planar_registry({'a': (0.0, 0.0), 'b': (0.0, 0.0), 'c': (500.0, 500.0)}))
        assert len(tess) == 3
        assert tess.area('a') > 0 and tess.area('b') > 0

    def test_geojson_metadata(self):
        tess = build_voronoi(grid_registry(2), padding_fraction=0.25)
        collection = tess.to_geojson()
        assert collection['metadata']['padding_fraction'] == 0.25
        assert [f['properties']['cell_id'] for f in collection['features']] == list(tess.cell_ids)

    def test_zero_towers(self):
        with pytest.raises(InsufficientDataError):
            build_voronoi(planar_registry({}))


class TestAdjacency:
    def test_two_cells(self):
        weights = build_adjacency(build_voronoi(planar_registry({'a': (0, 0), 'b': (10, 0)})))
        assert weights.weight('a', 'b') == weights.weight('b', 'a') == 1

    def test_point_contact_is_not_adjacency(self):
        weights = build_adjacency(build_voronoi(planar_registry({'a': (0, 0), 'b': (1, 0), 'c': (0, 1),
                                                                 'd': (1, 1)})))
        assert weights.weight('a', 'd') == 0
        assert weights.weight('b', 'c') == 0
        assert weights.weight('a', 'b') == weights.weight('a', 'c') == 1

    def test_grid_matches_hand_drawn_oracle(self):
        weights = build_adjacency(build_voronoi(grid_registry(3)))
        # rook neighbours of a 3x3 grid, drawn by hand
        expected = {
            't00': {'t01', 't10'}, 't02': {'t01', 't12'}, 't20': {'t10', 't21'}, 't22': {'t12', 't21'},
            't01': {'t00', 't02', 't11'}, 't10': {'t00', 't20', 't11'},
            't12': {'t02', 't22', 't11'}, 't21': {'t20', 't22', 't11'},
            't11': {'t01', 't10', 't12', 't21'},
        }
        assert {u: set(n) for u, n in weights.neighbors.items()} == expected
        assert weights.cardinalities()['t00'] == 3

    def test_symmetric_sparse_with_self(self):
        weights = build_adjacency(build_voronoi(grid_registry(4)))
        matrix = weights.to_sparse().toarray()
        assert (matrix == matrix.T).all()
        assert (np.diag(matrix) == 1).all()
        assert not build_adjacency(build_voronoi(grid_registry(2)), include_self=False).to_sparse().diagonal().any()

    def test_polygon_fallback_agrees_with_ridges(self):
        tess = build_voronoi(grid_registry(3))
        bare = Tessellation(cells=tess.cells, bbox=tess.bbox, sites=tess.sites)
        assert build_adjacency(bare).neighbors == build_adjacency(tess).neighbors

    def test_from_pairs_frame(self):
        weights = AdjacencyWeights.from_pairs(['b', 'a', 'c'], [('b', 'a')])
        assert weights.ids == ('a', 'b', 'c')
        assert weights.to_frame().values.tolist() == [['a', 'b']]


class TestDensity:
    def square_tessellation(self, side_m):
        return Tessellation(cells={'a': box(0, 0, side_m, side_m)}, bbox=(0, 0, side_m, side_m),
                            sites={'a': (side_m / 2, side_m / 2)})

    def test_four_km2(self):
        assert tower_density(self.square_tessellation(2000.0))['a'] == pytest.approx(0.25)

    def test_one_km2(self):
        assert tower_density(self.square_tessellation(1000.0))['a'] == pytest.approx(1.0)

    def test_doubling_coordinates_quarters_density(self):
        rng = np.random.default_rng(2)
        points = rng.uniform(0, 3000, size=(12, 2))
        base = tower_density(build_voronoi(planar_registry({f"c{k}": tuple(p) for k, p in enumerate(points)})))
        doubled = tower_density(build_voronoi(planar_registry({f"c{k}": tuple(2 * p)
                                                                for k, p in enumerate(points)})))
        for cell_id in base:
            assert doubled[cell_id] == pytest.approx(base[cell_id] / 4, rel=1e-9)


def units(level, **polygons):
    return [AdminGeometry(unit_id, level, polygon) for unit_id, polygon in polygons.items()]


class TestCrosswalk:
    def test_identical_unit(self):
        xwalk = build_crosswalk(units('src', s=box(0, 0, 1, 1)), units('dst', t=box(0, 0, 1, 1)))
        assert xwalk.row('s') == {'t': pytest.approx(1.0)}
        assert not xwalk.partial

    def test_symmetric_split(self):
        xwalk = build_crosswalk(units('src', s=box(0, 0, 1, 1)),
                                units('dst', left=box(0, 0, 0.5, 1), right=box(0.5, 0, 1, 1)))
        assert xwalk.row('s') == {'left': pytest.approx(0.5), 'right': pytest.approx(0.5)}

    def test_partial_coverage_reported(self):
        xwalk = build_crosswalk(units('src', s=box(0, 0, 1, 1)), units('dst', t=box(0, 0, 0.75, 1)))
        assert xwalk.partial
        assert xwalk.uncovered['s'] == pytest.approx(0.25)
        assert xwalk.coverage_frame()['partial'].tolist() == [True]

    def test_overlapping_targets_reported_as_overcovered(self):
        xwalk = build_crosswalk(units('src', s=box(0, 0, 1, 1)),
                                units('dst', a=box(0, 0, 1, 1), b=box(0.5, 0, 1, 1)))
        assert xwalk.row_sum('s') == pytest.approx(1.5)
        assert not xwalk.partial
        assert 's' not in xwalk.uncovered
        assert xwalk.overcovered['s'] == pytest.approx(0.5)
        assert not xwalk.full_coverage
        row = xwalk.coverage_frame().iloc[0]
        assert (bool(row['partial']), row['uncovered'], row['overcovered']) == (False, 0.0, pytest.approx(0.5))

    def test_overcovered_survives_composition(self):
        first = build_crosswalk(units('src', s=box(0, 0, 1, 1)),
                                units('mid', a=box(0, 0, 1, 1), b=box(0.5, 0, 1, 1)))
        second = build_crosswalk(units('mid', a=box(0, 0, 1, 1), b=box(0.5, 0, 1, 1)),
                                 units('top', t=box(0, 0, 1, 1)))
        composed = first.compose(second)
        assert composed.overcovered['s'] == pytest.approx(0.5)
        assert composed.full_coverage is False

    def test_monte_carlo_oracle(self):
        rng = np.random.default_rng(8)
        sites = {f"c{k}": tuple(p) for k, p in enumerate(rng.uniform(0, 1000, size=(5, 2)))}
        tess = build_voronoi(planar_registry(sites))
        minx, miny, maxx, maxy = tess.bbox
        cuts = np.linspace(minx, maxx, 4)
        strips = {f"r{k}": box(cuts[k], miny, cuts[k + 1], maxy) for k in range(3)}
        xwalk = build_crosswalk(tess, units('strip', **strips), 'cell', 'strip')

        x = rng.uniform(minx, maxx, 10 ** 6)
        y = rng.uniform(miny, maxy, 10 ** 6)
        in_strip = {r: shapely.contains_xy(p, x, y) for r, p in strips.items()}
        for cell_id, cell in tess.cells.items():
            in_cell = shapely.contains_xy(cell, x, y)
            for r in strips:
                estimate = (in_cell & in_strip[r]).sum() / in_cell.sum()
                assert xwalk.row(cell_id).get(r, 0.0) == pytest.approx(estimate, abs=1e-2)

    def test_compose_equals_direct(self):
        tess = build_voronoi(grid_registry(3, spacing=300.0))
        minx, miny, maxx, maxy = tess.bbox
        midx, midy = (minx + maxx) / 2, (miny + maxy) / 2
        quads = {'q1': box(minx, miny, midx, midy), 'q2': box(midx, miny, maxx, midy),
                 'q3': box(minx, midy, midx, maxy), 'q4': box(midx, midy, maxx, maxy)}
        halves = {'west': box(minx, miny, midx, maxy), 'east': box(midx, miny, maxx, maxy)}
        fine = build_crosswalk(tess, units('quad', **quads), 'cell', 'quad')
        coarse = build_crosswalk(units('quad', **quads), units('half', **halves), 'quad', 'half')
        direct = build_crosswalk(tess, units('half', **halves), 'cell', 'half')
        composed = fine.compose(coarse)
        for cell_id in tess.cell_ids:
            for target, weight in direct.row(cell_id).items():
                assert composed.row(cell_id)[target] == pytest.approx(weight, abs=1e-9)

    def test_compose_level_mismatch(self):
        a = Crosswalk.identity(['x'], 'cell')
        b = Crosswalk.identity(['x'], 'iris')
        with pytest.raises(ValueError):
            a.compose(b)

    def test_invalid_polygon_named(self):
        bowtie = shapely.Polygon([(0, 0), (1, 1), (1, 0), (0, 1)])
        with pytest.raises(GeometryError, match='bad'):
            build_crosswalk(units('src', bad=bowtie), units('dst', t=box(0, 0, 1, 1)))

    def test_identity_rows(self):
        xwalk = Crosswalk.identity(['b', 'a'], 'cell')
        assert xwalk.sources() == ('a', 'b')
        assert xwalk.row('a') == {'a': 1.0}
        assert xwalk.source_areas == {'a': 1.0, 'b': 1.0}
