"""
Seeded synthetic worlds and CDR streams with known ground truth
"""

from .world import GroundTruth, World, WorldConfig, admin_geojson, generate_world
from .cdr_generator import UserSampler, generate_cdr, iter_cdr_records, records_frame
from .density_experiment import (DensityExperimentResult, DensityPopulation, PathEntropy, TowerGrid,
                                 density_population, random_path, run_density_experiment,
                                 same_path_three_densities, square_grid)
from .export import study_settings, world_tables

__all__ = ['GroundTruth', 'World', 'WorldConfig', 'admin_geojson', 'generate_world', 'UserSampler',
           'generate_cdr', 'iter_cdr_records', 'records_frame', 'DensityExperimentResult',
           'DensityPopulation', 'PathEntropy', 'TowerGrid', 'density_population', 'random_path',
           'run_density_experiment', 'same_path_three_densities', 'square_grid', 'study_settings',
           'world_tables']
