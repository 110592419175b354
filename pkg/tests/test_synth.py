import numpy as np
import pytest

from config import load_config
from errors import SynthesisError
from home_detection.heuristics import UserActivity
from synth import (WorldConfig, density_population, generate_cdr, generate_world, iter_cdr_records,
                   records_frame, run_density_experiment, same_path_three_densities, square_grid,
                   study_settings, world_tables)

from conftest import SMALL_WORLD


def small(**changes):
    return WorldConfig(**{**SMALL_WORLD, **changes})


class TestWorld:
    def test_same_seed_same_world(self, small_world):
        again = generate_world(small())
        assert again.registry.to_frame().equals(small_world.registry.to_frame())
        assert again.truth.homes == small_world.truth.homes
        for level in ('cell', 'iris', 'commune'):
            assert again.census[level].to_frame().equals(small_world.census[level].to_frame())

    def test_other_seed_other_world(self, small_world):
        assert generate_world(small(seed=12)).truth.homes != small_world.truth.homes

    def test_census_counts_true_homes(self, small_world):
        for level in ('cell', 'iris', 'commune'):
            assert sum(small_world.census[level].population().values()) == SMALL_WORLD['n_users']
        assert small_world.truth.population('cell') == {
            c: float(small_world.truth.home_counts().get(c, 0)) for c in small_world.registry.cell_ids}

    def test_nested_admin_grid(self, small_world):
        assert small_world.admin.levels() == ('commune', 'iris')
        assert len(small_world.admin.level('commune')) == 4
        assert len(small_world.admin.level('iris')) == 16

    def test_home_unit_concentrates_population(self):
        world = generate_world(small(home_unit='m0000', n_users=50))
        assert world.census['commune'].population()['m0000'] == 50

    def test_home_unit_without_towers(self):
        with pytest.raises(SynthesisError, match='nowhere'):
            generate_world(small(home_unit='nowhere'))

    def test_urban_intensity_ratio(self):
        world = generate_world(WorldConfig(n_towers=1000, n_users=10))
        assert 3.0 <= world.intensity_ratio() <= 5.0

    @pytest.mark.parametrize('changes', [dict(p_home_day=0.6, p_work_day=0.5), dict(p_home_night=1.5),
                                         dict(urban_radius_km=15.0), dict(n_towers=0)])
    def test_invalid_configuration(self, changes):
        with pytest.raises(SynthesisError):
            small(**changes)

    def test_from_settings(self):
        settings = load_config(None, {'synth': {'n_users': 7}, 'study': {'utc_offset_hours': 0.0}})
        cfg = WorldConfig.from_settings(settings, seed=5)
        assert (cfg.seed, cfg.n_users, cfg.utc_offset_hours) == (5, 7, 0.0)


class TestCdr:
    def test_deterministic(self, small_world, small_records):
        assert generate_cdr(small_world) == small_records

    def test_sorted_by_user_then_time(self, small_records):
        assert small_records == sorted(small_records, key=lambda r: (r.user_id, r.timestamp))

    def test_inside_study_window(self, small_world, small_records):
        study = small_world.config.study_config()
        assert all(study.contains(r.timestamp) for r in small_records)

    def test_users_independent_of_generation_order(self, small_world):
        users = dict(iter_cdr_records(small_world))
        first = sorted(users)[0]
        assert [r for r in generate_cdr(small_world) if r.user_id == first] == users[first]

    def test_night_events_at_home(self):
        world = generate_world(small(p_home_night=1.0, n_users=30))
        study = world.config.study_config()
        for user_id, events in iter_cdr_records(world):
            activity = UserActivity(events, study)
            night_cells = activity.cell_ids[activity.codes[activity.window_mask('night_broad')]]
            assert set(night_cells.tolist()) <= {world.truth.homes[user_id]}

    def test_zero_days(self, small_world):
        assert generate_cdr(small_world, small(days=0)) == []

    def test_frame_layout(self, small_records):
        frame = records_frame(small_records[:3])
        assert list(frame.columns) == ['user_id', 'timestamp', 'cell_id']
        assert frame['timestamp'].str.endswith('Z').all()


class TestExport:
    def test_tables(self, small_world, small_records):
        tables = world_tables(small_world, small_records)
        assert {'towers.csv', 'cdr.csv', 'admin.geojson', 'ground_truth.csv',
                'census_cell.csv', 'census_iris.csv', 'census_commune.csv'} <= set(tables)
        assert len(tables['cdr.csv']) == len(small_records)
        assert len(tables['admin.geojson']['features']) == 20

    def test_study_settings_reproduce_window(self, small_world):
        settings = study_settings(small_world, load_config(None, {'synth': SMALL_WORLD}))
        assert settings['study']['start'] == '2007-06-01T00:00:00Z'
        assert settings['study']['end'] == '2007-06-15T00:00:00Z'
        assert settings['inputs']['admin_coordinates'] == 'lonlat'
        assert settings['synth']['n_users'] == SMALL_WORLD['n_users']

    def test_generated_directory_reloads(self, world_dir):
        settings = load_config(world_dir / 'study.ini')
        assert settings['synth']['seed'] == SMALL_WORLD['seed']
        for name in ('towers.csv', 'cdr.csv', 'admin.geojson', 'census_iris.csv'):
            assert (world_dir / name).exists()


class TestDensityExperiment:
    def test_grid_density(self):
        grid = square_grid(4.0, 1000.0)
        assert len(grid.cell_ids) == 16
        assert grid.density == pytest.approx(1.0)

    def test_same_path_entropy_grows_with_density(self):
        runs = same_path_three_densities(seed=3)
        values = [run.entropy.H for run in runs]
        assert values == sorted(values)
        assert values[-1] - values[0] >= 0.2
        assert [run.factor for run in runs] == [1, 4, 16]

    def test_population_cycles_through_grids(self):
        population = density_population(9, seed=3)
        assert population.frame['factor'].tolist() == [1, 4, 16] * 3
        assert all(h.home_cell in population.density for h in population.homes)

    def test_calibration_removes_density_dependence(self):
        result = run_density_experiment(n_users=900, seed=3)
        assert abs(result.corr_cme) <= 0.1
        assert abs(result.corr_h) > abs(result.corr_cme)
        assert len(result.table) == 3
        assert np.isfinite(result.to_frame()['CME']).all()
