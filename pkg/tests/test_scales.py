import numpy as np
import pytest
from shapely.geometry import box

from errors import ConfigError, InsufficientDataError
from geometry import Crosswalk, build_crosswalk, build_voronoi
from ingest.records import AdminGeometry, TowerRegistry
from scales import (UNDEFINED, AggregationMethod, MultiScaleReport, aggregate, check_method, crosswalks_from_finest,
                    flag_scale_changes, multi_scale_correlate, parse_methods, sensitivity_report)


def merge_all(sources, level='cell', target='all', areas=None):
    """Crosswalk sending every source unit wholly onto one target"""
    return Crosswalk(level, target, {s: ((target, 1.0),) for s in sources},
                     source_areas=areas or dict.fromkeys(sources, 1.0))


def units(level, **polygons):
    return [AdminGeometry(unit_id, level, polygon) for unit_id, polygon in polygons.items()]


@pytest.fixture
def nested_levels():
    """9 grid cells, 4 quadrants and 2 halves over the same bounding box"""
    sites = {f"t{i}{j}": (i * 300.0, j * 300.0) for i in range(3) for j in range(3)}
    tess = build_voronoi(TowerRegistry.from_planar(sites))
    minx, miny, maxx, maxy = tess.bbox
    midx, midy = (minx + maxx) / 2, (miny + maxy) / 2
    quads = units('quad', q1=box(minx, miny, midx, midy), q2=box(midx, miny, maxx, midy),
                  q3=box(minx, midy, midx, maxy), q4=box(midx, midy, maxx, maxy))
    halves = units('half', west=box(minx, miny, midx, maxy), east=box(midx, miny, maxx, maxy))
    return tess, quads, halves


class TestAggregate:
    def test_identity_crosswalk_is_identity(self):
        values = {'a': 1.5, 'b': -2.0, 'c': 7.0}
        xwalk = Crosswalk.identity(values, 'cell')
        for method in AggregationMethod:
            weights = dict.fromkeys(values, 10.0)
            assert aggregate(values, xwalk, method, weights) == pytest.approx(values)

    def test_plain_mean(self):
        assert aggregate({'a': 1.0, 'b': 3.0}, merge_all('ab'), AggregationMethod.MEAN) == {'all': 2.0}

    def test_population_weighted_mean(self):
        result = aggregate({'a': 1.0, 'b': 2.0, 'c': 3.0}, merge_all('abc'),
                           AggregationMethod.POPULATION_WEIGHTED_MEAN,
                           weights={'a': 100.0, 'b': 300.0, 'c': 600.0})
        assert result['all'] == pytest.approx(2.5)

    def test_areal_weighted_mean(self):
        xwalk = merge_all('ab', areas={'a': 1.0, 'b': 3.0})
        assert aggregate({'a': 0.0, 'b': 4.0}, xwalk, 'areal_weighted')['all'] == pytest.approx(3.0)

    def test_sum_of_split_unit(self):
        xwalk = Crosswalk('cell', 'iris', {'a': (('x', 0.25), ('y', 0.75))}, source_areas={'a': 1.0})
        assert aggregate({'a': 8.0}, xwalk, AggregationMethod.SUM) == {'x': 2.0, 'y': 6.0}

    def test_weighted_mean_needs_weights(self):
        with pytest.raises(InsufficientDataError):
            aggregate({'a': 1.0}, merge_all('a'), AggregationMethod.POPULATION_WEIGHTED_MEAN)
        with pytest.raises(InsufficientDataError):
            aggregate({'a': 1.0, 'b': 2.0}, merge_all('ab'), AggregationMethod.POPULATION_WEIGHTED_MEAN,
                      weights={'a': 1.0})

    def test_unknown_source_unit(self):
        with pytest.raises(KeyError):
            aggregate({'zz': 1.0}, merge_all('ab'), AggregationMethod.SUM)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            AggregationMethod.parse('median')

    def test_counts_conserved_under_full_coverage(self, nested_levels):
        tess, quads, _ = nested_levels
        xwalk = build_crosswalk(tess, quads, 'cell', 'quad')
        rng = np.random.default_rng(6)
        counts = {c: float(v) for c, v in zip(tess.cell_ids, rng.integers(0, 500, len(tess)))}
        total = sum(aggregate(counts, xwalk, AggregationMethod.SUM).values())
        assert total == pytest.approx(sum(counts.values()), rel=1e-9)

    def test_two_step_equals_one_step(self, nested_levels):
        tess, quads, halves = nested_levels
        cell_quad = build_crosswalk(tess, quads, 'cell', 'quad')
        quad_half = build_crosswalk(quads, halves, 'quad', 'half')
        cell_half = build_crosswalk(tess, halves, 'cell', 'half')
        rng = np.random.default_rng(7)
        counts = {c: float(v) for c, v in zip(tess.cell_ids, rng.integers(0, 100, len(tess)))}

        two_step = aggregate(aggregate(counts, cell_quad, 'sum'), quad_half, 'sum')
        one_step = aggregate(counts, cell_half, 'sum')
        assert set(two_step) == set(one_step)
        for unit in one_step:
            assert two_step[unit] == pytest.approx(one_step[unit], abs=1e-9)

    def test_chain_from_finest(self, nested_levels):
        tess, quads, halves = nested_levels
        chain = crosswalks_from_finest(['cell', 'quad', 'half'],
                                       [build_crosswalk(tess, quads, 'cell', 'quad'),
                                        build_crosswalk(quads, halves, 'quad', 'half')])
        assert chain['cell'].source_level == chain['cell'].target_level == 'cell'
        assert chain['half'].source_level == 'cell'
        assert chain['half'].target_level == 'half'

    def test_chain_gap(self):
        with pytest.raises(ValueError):
            crosswalks_from_finest(['cell', 'iris', 'commune'], [merge_all('ab', target='x')])

    @pytest.mark.parametrize('target', ['quad', 'half'])
    def test_weighted_mean_preserved_under_full_coverage(self, nested_levels, target):
        tess, quads, halves = nested_levels
        xwalk = build_crosswalk(tess, quads if target == 'quad' else halves, 'cell', target)
        assert xwalk.full_coverage
        rng = np.random.default_rng(8)
        population = {c: float(v) for c, v in zip(tess.cell_ids, rng.integers(1, 500, len(tess)))}
        values = {c: float(v) for c, v in zip(tess.cell_ids, rng.normal(3.0, 2.0, len(tess)))}

        means = aggregate(values, xwalk, AggregationMethod.POPULATION_WEIGHTED_MEAN, population)
        target_population = aggregate(population, xwalk, AggregationMethod.SUM)
        fine = sum(population[c] * values[c] for c in values) / sum(population.values())
        coarse = sum(target_population[u] * means[u] for u in means) / sum(target_population.values())
        assert coarse == pytest.approx(fine, rel=1e-9)


class TestMethodConfig:
    def test_defaults_kept(self):
        defaults = {'homes': AggregationMethod.SUM, 'H': AggregationMethod.POPULATION_WEIGHTED_MEAN}
        assert parse_methods('', defaults) == defaults

    def test_overrides(self):
        methods = parse_methods(' H:mean , EDI:areal_weighted', {'H': AggregationMethod.POPULATION_WEIGHTED_MEAN})
        assert methods == {'H': AggregationMethod.MEAN, 'EDI': AggregationMethod.AREAL_WEIGHTED}

    def test_sum_only_for_counts(self):
        assert check_method('population', 'sum') is AggregationMethod.SUM
        with pytest.raises(ConfigError, match='not a count variable'):
            check_method('H', 'sum')
        with pytest.raises(ConfigError):
            parse_methods('CME:sum', {})

    @pytest.mark.parametrize('text', ['H', ':mean', 'H:median'])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            parse_methods(text, {})


class TestScaleChanges:
    def test_table_rows(self):
        report = MultiScaleReport.from_correlations(
            {'homes~population': {'iris': 0.62, 'commune': 0.92},
             'CME~EDI': {'iris': -0.03, 'commune': -0.43}},
            levels=['iris', 'commune'])
        deltas = report.scale_differences
        assert deltas[('homes~population', 'iris', 'commune')] == pytest.approx(0.30)
        assert deltas[('CME~EDI', 'iris', 'commune')] == pytest.approx(-0.40)
        flags = {c.pair: c.flag for c in report.changes()}
        assert flags == {'homes~population': True, 'CME~EDI': True}

    def test_sign_change_flagged_even_when_small(self):
        (change,) = flag_scale_changes({'a': 0.05, 'b': -0.05}, ['a', 'b'])
        assert change.flag
        assert change.delta_r == pytest.approx(-0.10)

    def test_small_same_sign_change_not_flagged(self):
        (change,) = flag_scale_changes({'a': 0.50, 'b': 0.60}, ['a', 'b'])
        assert not change.flag

    def test_undefined_level_skipped(self):
        changes = flag_scale_changes({'cell': 0.1, 'iris': None, 'commune': 0.2}, ['cell', 'iris', 'commune'])
        assert [(c.level_a, c.level_b) for c in changes] == [('cell', 'commune')]

    def test_frame_marks_undefined(self):
        report = MultiScaleReport.from_correlations({'H~EDI': {'cell': 0.3}}, levels=['cell', 'iris'])
        frame = report.to_frame().set_index('level')
        assert frame.loc['iris', 'r'] == UNDEFINED
        assert report.differences_frame().empty

    def test_missing_level_rejected(self):
        with pytest.raises(ValueError):
            MultiScaleReport(('cell', 'iris'), {'a~b': {'cell': 0.1}})

    def test_combine(self):
        left = MultiScaleReport.from_correlations({'a~b': {'cell': 0.1}}, ['cell'])
        right = MultiScaleReport.from_correlations({'c~d': {'cell': 0.2}}, ['cell'])
        assert MultiScaleReport.combine([left, right]).pairs() == ('a~b', 'c~d')


class TestMultiScaleCorrelate:
    def test_per_level_inputs_used_as_given(self):
        a = {'cell': {f"u{k}": float(k) for k in range(5)}, 'iris': {'i1': 1.0, 'i2': 2.0}}
        b = {'cell': {f"u{k}": 2.0 * k + 1 for k in range(5)}, 'iris': {'i1': 2.0, 'i2': 1.0}}
        report = multi_scale_correlate(a, b, [], ['cell', 'iris'], names=('a', 'b'))
        assert report.correlation('a~b', 'cell') == pytest.approx(1.0)
        assert report.correlation('a~b', 'iris') is None
        assert report.counts['a~b']['iris'] == 2

    def test_aggregated_from_finest(self, nested_levels):
        tess, quads, halves = nested_levels
        xwalks = [build_crosswalk(tess, quads, 'cell', 'quad'), build_crosswalk(quads, halves, 'quad', 'half')]
        rng = np.random.default_rng(12)
        homes = {c: float(v) for c, v in zip(tess.cell_ids, rng.integers(10, 100, len(tess)))}
        population = {c: 3.0 * v for c, v in homes.items()}
        report = multi_scale_correlate(homes, population, xwalks, ['cell', 'quad', 'half'], methods='sum',
                                       names=('homes', 'population'))
        assert report.correlation('homes~population', 'cell') == pytest.approx(1.0)
        assert report.correlation('homes~population', 'quad') == pytest.approx(1.0)
        # two halves leave fewer than three pairs
        assert report.correlation('homes~population', 'half') is None


class TestSensitivity:
    def levels(self, nested_levels):
        tess, quads, halves = nested_levels
        return tess, [build_crosswalk(tess, quads, 'cell', 'quad'), build_crosswalk(quads, halves, 'quad', 'half')]

    def test_constant_variable(self, nested_levels):
        tess, xwalks = self.levels(nested_levels)
        report = sensitivity_report(dict.fromkeys(tess.cell_ids, 4.0), xwalks, ['cell', 'quad', 'half'],
                                    method='mean')
        assert report.summary['variance'].abs().max() < 1e-20
        assert report.summary['mean'].tolist() == pytest.approx([4.0, 4.0, 4.0])
        assert report.flagged == ()

    def test_self_reference(self, nested_levels):
        tess, xwalks = self.levels(nested_levels)
        rng = np.random.default_rng(3)
        variable = {c: float(v) for c, v in zip(tess.cell_ids, rng.normal(size=len(tess)))}
        report = sensitivity_report(variable, xwalks, ['cell', 'quad'], method='mean', reference=variable,
                                    reference_method='mean', name='H')
        frame = report.to_frame().set_index('level')
        assert frame.loc['cell', 'r'] == pytest.approx(1.0)
        assert frame.loc['quad', 'r'] == pytest.approx(1.0)
        assert frame['variable'].unique().tolist() == ['H']
        assert frame.loc['cell', 'support'] == 9
