"""
Home-detection heuristics, population vectors and heuristic agreement
"""

from .heuristics import (HEURISTICS, ASSIGNMENT_COLUMNS, HeuristicSpec, HomeAssignment, UserActivity,
                         detect_home, detect_homes, resolve_heuristics)
from .population import PopulationVector, population_vector
from .agreement import agreement_matrix, heuristic_consensus

__all__ = ['HEURISTICS', 'ASSIGNMENT_COLUMNS', 'HeuristicSpec', 'HomeAssignment', 'UserActivity',
           'detect_home', 'detect_homes', 'resolve_heuristics', 'PopulationVector',
           'population_vector', 'agreement_matrix', 'heuristic_consensus']
