"""
Tessellation, spatial weights, density covariate and crosswalks
"""

from .voronoi import Tessellation, build_voronoi
from .adjacency import AdjacencyWeights, build_adjacency
from .density import DensityMap, tower_density
from .crosswalk import Crosswalk, build_crosswalk

__all__ = ['Tessellation', 'build_voronoi', 'AdjacencyWeights', 'build_adjacency',
           'DensityMap', 'tower_density', 'Crosswalk', 'build_crosswalk']
