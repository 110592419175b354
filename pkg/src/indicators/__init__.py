"""
Mobility entropy, its density correction and per-tower averages
"""

from .entropy import EntropyValue, VisitDistribution, mobility_entropy, random_entropy, visit_distribution
from .calibration import CalibrationTable, CmeValue, calibrate_baseline, corrected_mobility_entropy
from .tower_average import TowerIndicator, average_by_home

__all__ = ['EntropyValue', 'VisitDistribution', 'mobility_entropy', 'random_entropy',
           'visit_distribution', 'CalibrationTable', 'CmeValue', 'calibrate_baseline',
           'corrected_mobility_entropy', 'TowerIndicator', 'average_by_home']
