"""
Same path, several tower densities

A continuous correlated random walk is snapped onto square tower grids whose
densities differ by the given factors (spacing s / sqrt(factor)). Mobility
entropy grows with density for the same movement; calibrating on a population
of such users and taking the residual removes that dependence.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree
from tqdm import tqdm

from config import DEFAULT_CONFIG, StudyConfig
from geometry.density import M2_PER_KM2, DensityMap
from home_detection.heuristics import HEURISTICS, HomeAssignment, detect_home
from indicators.calibration import CalibrationTable, calibrate_baseline, corrected_mobility_entropy
from indicators.entropy import EntropyValue, mobility_entropy, visit_distribution
from ingest.records import CdrRecord
from spatial_stats.similarity import pearson

logger = logging.getLogger(__name__)

DEFAULT_FACTORS = (1, 4, 16)
DEFAULT_SPACING_M = 2000.0
PATH_STEPS = 150
STEP_M = 100.0
TURN_SD = 0.3
START_RADIUS_M = 5000.0


@dataclass(frozen=True)
class TowerGrid:
    prefix: str
    spacing_m: float
    cell_ids: np.ndarray
    xy: np.ndarray

    @property
    def density(self) -> float:
        """Towers per km^2 (1 / square cell area)"""
        return M2_PER_KM2 / self.spacing_m ** 2

    def snap(self, path: np.ndarray) -> List[str]:
        _, index = cKDTree(self.xy).query(path)
        return [str(c) for c in self.cell_ids[index]]


def square_grid(extent_km: float, spacing_m: float, prefix: str = 'g') -> TowerGrid:
    extent = extent_km * 1000.0
    n = int(math.ceil(extent / spacing_m))
    centres = (np.arange(n) + 0.5) * spacing_m - extent / 2
    gx, gy = np.meshgrid(centres, centres, indexing='ij')
    width = len(str(n - 1))
    ids = np.array([f"{prefix}{i:0{width}d}_{j:0{width}d}" for i in range(n) for j in range(n)])
    return TowerGrid(prefix, spacing_m, ids, np.column_stack([gx.ravel(), gy.ravel()]))


def random_path(rng: np.random.Generator, n_steps: int = PATH_STEPS, step_m: float = STEP_M,
                turn_sd: float = TURN_SD, start_radius_m: float = START_RADIUS_M) -> np.ndarray:
    """Correlated random walk of n_steps + 1 points"""
    r = start_radius_m * math.sqrt(rng.random())
    phi = rng.uniform(0, 2 * math.pi)
    heading = rng.uniform(0, 2 * math.pi) + np.cumsum(rng.normal(0.0, turn_sd, n_steps))
    steps = step_m * np.column_stack([np.cos(heading), np.sin(heading)])
    start = np.array([[r * math.cos(phi), r * math.sin(phi)]])
    return np.vstack([start, start + np.cumsum(steps, axis=0)])


def path_events(cells: Sequence[str], user_id: str, study: StudyConfig) -> List[CdrRecord]:
    """One event per path point, spread evenly through the study window"""
    span = study.end_ts - study.start_ts - 2
    stamps = study.start_ts + 1 + (np.arange(len(cells)) * span) // max(len(cells), 1)
    return [CdrRecord(user_id, int(t), c) for t, c in zip(stamps, cells)]


def _grids(extent_km: float, spacing_m: float, factors: Sequence[int]) -> List[TowerGrid]:
    return [square_grid(extent_km, spacing_m / math.sqrt(f), prefix=f"g{k}-") for k, f in enumerate(factors)]


@dataclass(frozen=True)
class PathEntropy:
    factor: int
    density: float
    entropy: EntropyValue
    home_cell: str


def same_path_three_densities(seed: int = 7, spacing_m: float = DEFAULT_SPACING_M,
                              factors: Sequence[int] = DEFAULT_FACTORS, extent_km: float = 40.0,
                              n_steps: int = PATH_STEPS) -> List[PathEntropy]:
    """Entropy of one fixed path discretized on each tower grid"""
    path = random_path(np.random.default_rng([seed, 0]), n_steps=n_steps)
    results = []
    for factor, grid in zip(factors, _grids(extent_km, spacing_m, factors)):
        cells = grid.snap(path)
        entropy = mobility_entropy(visit_distribution(path_events(cells, 'path', _study()), 'path'))
        home = max(sorted(set(cells)), key=cells.count)
        results.append(PathEntropy(factor, grid.density, entropy, home))
        logger.debug(f"Path on {grid.spacing_m:.0f} m grid: {len(set(cells))} towers, H = {entropy.H:.3f}")
    return results


def _study() -> StudyConfig:
    return StudyConfig.from_settings(DEFAULT_CONFIG)


@dataclass(frozen=True)
class DensityPopulation:
    frame: pd.DataFrame
    homes: Tuple[HomeAssignment, ...]
    entropies: Tuple[EntropyValue, ...]
    density: DensityMap


def density_population(n_users: int, seed: int = 7, spacing_m: float = DEFAULT_SPACING_M,
                       factors: Sequence[int] = DEFAULT_FACTORS, extent_km: float = 40.0,
                       n_steps: int = PATH_STEPS, progress: bool = False) -> DensityPopulation:
    """
    Users with their own random paths, cycling through the grid densities

    Homes are detected with H1 on the snapped events; the density map covers
    every tower of every grid.
    """
    study = _study()
    grids = _grids(extent_km, spacing_m, factors)
    trees = [cKDTree(g.xy) for g in grids]
    width = max(5, len(str(n_users - 1)))
    homes, entropies, rows = [], [], []
    for k in tqdm(range(n_users), desc="Density population", disable=not progress):
        grid_index = k % len(grids)
        grid = grids[grid_index]
        user_id = f"p{k:0{width}d}"
        path = random_path(np.random.default_rng([seed, 1, k]), n_steps=n_steps)
        _, index = trees[grid_index].query(path)
        events = path_events([str(c) for c in grid.cell_ids[index]], user_id, study)
        home = detect_home(events, HEURISTICS['H1'], study)
        entropy = mobility_entropy(visit_distribution(events))
        homes.append(home)
        entropies.append(entropy)
        rows.append((user_id, factors[grid_index], grid.density, math.log10(grid.density), entropy.H,
                     home.home_cell))

    density: Dict[str, float] = {}
    for grid in grids:
        density.update(dict.fromkeys(grid.cell_ids.tolist(), grid.density))
    frame = pd.DataFrame(rows, columns=['user_id', 'factor', 'density', 'log10_density', 'H', 'home_cell'])
    return DensityPopulation(frame, tuple(homes), tuple(entropies), DensityMap(density))


@dataclass(frozen=True)
class DensityExperimentResult:
    path: Tuple[PathEntropy, ...]
    path_cme: Tuple[float, ...]
    table: CalibrationTable
    corr_h: float
    corr_cme: float

    @property
    def h_spread(self) -> float:
        values = [p.entropy.H for p in self.path]
        return max(values) - min(values)

    @property
    def cme_spread(self) -> float:
        return max(self.path_cme) - min(self.path_cme)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'factor': [p.factor for p in self.path],
                             'density': [p.density for p in self.path],
                             'H': [p.entropy.H for p in self.path],
                             'CME': list(self.path_cme)})


def run_density_experiment(n_users: int = 10000, seed: int = 7, bins: int = 10, min_users: int = 50,
                           spacing_m: float = DEFAULT_SPACING_M, factors: Sequence[int] = DEFAULT_FACTORS,
                           extent_km: float = 40.0, progress: bool = False) -> DensityExperimentResult:
    """Calibrate on a density population, then correct the fixed path's entropies"""
    population = density_population(n_users, seed, spacing_m, factors, extent_km, progress=progress)
    table = calibrate_baseline(population.entropies, population.homes, population.density,
                               bins=bins, min_users=min_users)
    frame = population.frame
    cme = np.array([corrected_mobility_entropy(e, population.density[h.home_cell], table).value
                    for e, h in zip(population.entropies, population.homes)])
    corr_h = pearson(frame['log10_density'].to_numpy(), frame['H'].to_numpy()).r
    try:
        corr_cme = pearson(frame['log10_density'].to_numpy(), cme).r
    except ValueError:
        # CME constant over the population
        corr_cme = 0.0

    path = tuple(same_path_three_densities(seed, spacing_m, factors, extent_km))
    path_cme = tuple(corrected_mobility_entropy(p.entropy, p.density, table).value for p in path)
    result = DensityExperimentResult(path, path_cme, table, corr_h, corr_cme)
    logger.info(f"Density experiment: H spread {result.h_spread:.3f} bits, CME spread "
                f"{result.cme_spread:.3f} bits, corr(H, log d) = {corr_h:.3f}, "
                f"corr(CME, log d) = {corr_cme:.3f}")
    return result
