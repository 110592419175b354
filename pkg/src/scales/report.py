"""
Multi-scale correlation report and aggregation sensitivity

For each pair of variables the report holds Pearson r at every level (or an
explicit undefined marker) and the scale difference r_b - r_a between
consecutive levels where both are defined.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import DegenerateFieldError, InsufficientDataError
from geometry.crosswalk import Crosswalk
from scales.aggregation import (AggregationMethod, LevelValues, UnitValues, crosswalks_from_finest,
                                is_per_level, level_fields)
from spatial_stats.similarity import CorrelationCoefficient, pearson

logger = logging.getLogger(__name__)

UNDEFINED = 'undefined'
DEFAULT_DELTA_THRESHOLD = 0.2


def pair_name(a: str, b: str) -> str:
    return f"{a}~{b}"


@dataclass(frozen=True)
class ScaleChange:
    pair: str
    level_a: str
    level_b: str
    delta_r: float
    flag: bool


def flag_scale_changes(r_by_level: Mapping[str, Optional[float]], levels: Sequence[str],
                       threshold: float = DEFAULT_DELTA_THRESHOLD, pair: str = '') -> List[ScaleChange]:
    """
    Scale differences between consecutive defined levels

    A change is flagged when r changes sign or |Δr| exceeds ``threshold``.
    """
    defined = [level for level in levels if r_by_level.get(level) is not None]
    changes = []
    for level_a, level_b in zip(defined, defined[1:]):
        r_a, r_b = r_by_level[level_a], r_by_level[level_b]
        delta = r_b - r_a
        flag = bool(r_a * r_b < 0 or abs(delta) > threshold)
        changes.append(ScaleChange(pair, level_a, level_b, delta, flag))
    return changes


@dataclass(frozen=True)
class MultiScaleReport:
    levels: Tuple[str, ...]
    rows: Mapping[str, Mapping[str, Optional[float]]]
    counts: Mapping[str, Mapping[str, int]] = field(default_factory=dict)
    threshold: float = DEFAULT_DELTA_THRESHOLD

    def __post_init__(self):
        for pair, by_level in self.rows.items():
            missing = [level for level in self.levels if level not in by_level]
            if missing:
                raise ValueError(f"Report row {pair} lacks levels {missing}")

    def pairs(self) -> Tuple[str, ...]:
        return tuple(self.rows)

    def correlation(self, pair: str, level: str) -> Optional[float]:
        return self.rows[pair][level]

    def changes(self) -> List[ScaleChange]:
        return [change for pair in self.pairs()
                for change in flag_scale_changes(self.rows[pair], self.levels, self.threshold, pair)]

    @property
    def scale_differences(self) -> Dict[Tuple[str, str, str], float]:
        return {(c.pair, c.level_a, c.level_b): c.delta_r for c in self.changes()}

    def to_frame(self) -> pd.DataFrame:
        records = []
        for pair in self.pairs():
            for level in self.levels:
                r = self.rows[pair][level]
                n = self.counts.get(pair, {}).get(level, 0)
                records.append((pair, level, UNDEFINED if r is None else r, n))
        return pd.DataFrame(records, columns=['pair', 'level', 'r', 'n'])

    def differences_frame(self) -> pd.DataFrame:
        return pd.DataFrame([(c.pair, c.level_a, c.level_b, c.delta_r, c.flag) for c in self.changes()],
                            columns=['pair', 'level_a', 'level_b', 'delta_r', 'flag'])

    @classmethod
    def from_correlations(cls, correlations: Mapping[str, Mapping[str, Union[None, float, CorrelationCoefficient]]],
                          levels: Sequence[str], threshold: float = DEFAULT_DELTA_THRESHOLD
                          ) -> 'MultiScaleReport':
        """Report over given correlations; levels absent from a row are undefined"""
        rows, counts = {}, {}
        for pair, by_level in correlations.items():
            rows[pair], counts[pair] = {}, {}
            for level in levels:
                value = by_level.get(level)
                if isinstance(value, CorrelationCoefficient):
                    rows[pair][level], counts[pair][level] = value.r, value.n
                else:
                    rows[pair][level] = None if value is None else float(value)
                    counts[pair][level] = 0
        return cls(tuple(levels), rows, counts, threshold)

    @classmethod
    def combine(cls, reports: Iterable['MultiScaleReport']) -> 'MultiScaleReport':
        reports = list(reports)
        if not reports:
            raise ValueError("No reports to combine")
        levels = reports[0].levels
        if any(r.levels != levels for r in reports):
            raise ValueError("Reports cover different levels")
        rows, counts = {}, {}
        for report in reports:
            rows.update(report.rows)
            counts.update(report.counts)
        return cls(levels, rows, counts, reports[0].threshold)


def _correlate(a: Optional[Mapping[str, float]], b: Optional[Mapping[str, float]]
               ) -> Tuple[Optional[CorrelationCoefficient], int]:
    if a is None or b is None:
        return None, 0
    shared = [u for u in set(a) & set(b) if np.isfinite(a[u]) and np.isfinite(b[u])]
    try:
        return pearson(a, b), len(shared)
    except (InsufficientDataError, DegenerateFieldError) as e:
        logger.debug(f"Correlation undefined: {e}")
        return None, len(shared)


def _methods(methods) -> Tuple[AggregationMethod, AggregationMethod]:
    if isinstance(methods, (str, AggregationMethod)):
        return AggregationMethod.parse(methods), AggregationMethod.parse(methods)
    method_a, method_b = methods
    return AggregationMethod.parse(method_a), AggregationMethod.parse(method_b)


def multi_scale_correlate(var_a: Union[UnitValues, LevelValues], var_b: Union[UnitValues, LevelValues],
                          xwalks: Iterable[Crosswalk], levels: Sequence[str],
                          methods=AggregationMethod.POPULATION_WEIGHTED_MEAN,
                          weights: Optional[UnitValues] = None, names: Tuple[str, str] = ('a', 'b'),
                          threshold: float = DEFAULT_DELTA_THRESHOLD) -> MultiScaleReport:
    """
    Correlate two variables at every level

    Each variable is either a finest-level field, aggregated upward through the
    crosswalk chain with its method, or already given per level. A level where
    either side has fewer than 3 usable units is reported undefined.

    Args:
        var_a, var_b: the two variables
        xwalks: crosswalks chaining the finest level to every other level
        levels: report levels, finest first
        methods: one method for both variables or a (method_a, method_b) pair
        weights: finest-level population for population-weighted means
        names: variable names forming the report row label
    """
    levels = tuple(levels)
    method_a, method_b = _methods(methods)
    needs_chain = not (is_per_level(var_a) and is_per_level(var_b))
    from_finest = crosswalks_from_finest(levels, xwalks) if needs_chain else {}

    fields_a = level_fields(var_a, levels, from_finest, method_a, weights)
    fields_b = level_fields(var_b, levels, from_finest, method_b, weights)
    pair = pair_name(*names)
    rows, counts = {pair: {}}, {pair: {}}
    for level in levels:
        coefficient, n = _correlate(fields_a[level], fields_b[level])
        rows[pair][level] = None if coefficient is None else coefficient.r
        counts[pair][level] = n
        logger.info(f"{pair} at {level}: r = "
                    f"{'undefined' if coefficient is None else f'{coefficient.r:.4f}'} (n={n})")
    return MultiScaleReport(levels, rows, counts, threshold)


@dataclass(frozen=True)
class SensitivityReport:
    variable: str
    summary: pd.DataFrame
    changes: Tuple[ScaleChange, ...]

    @property
    def flagged(self) -> Tuple[ScaleChange, ...]:
        return tuple(c for c in self.changes if c.flag)

    def to_frame(self) -> pd.DataFrame:
        frame = self.summary.copy()
        frame.insert(0, 'variable', self.variable)
        return frame


def sensitivity_report(variable: Union[UnitValues, LevelValues], xwalks: Iterable[Crosswalk],
                       levels: Sequence[str], method=AggregationMethod.POPULATION_WEIGHTED_MEAN,
                       reference: Union[UnitValues, LevelValues, None] = None,
                       reference_method=AggregationMethod.POPULATION_WEIGHTED_MEAN,
                       weights: Optional[UnitValues] = None, threshold: float = DEFAULT_DELTA_THRESHOLD,
                       name: str = 'variable') -> SensitivityReport:
    """
    Per-level mean, variance, support and r against a reference variable, with
    flags where r changes sign or moves by more than ``threshold`` between levels
    """
    levels = tuple(levels)
    method = AggregationMethod.parse(method)
    per_level = is_per_level(variable) and (reference is None or is_per_level(reference))
    from_finest = {} if per_level else crosswalks_from_finest(levels, xwalks)
    fields = level_fields(variable, levels, from_finest, method, weights)
    references = level_fields(reference, levels, from_finest, AggregationMethod.parse(reference_method),
                              weights) if reference is not None else dict.fromkeys(levels)

    records, r_by_level = [], {}
    for level in levels:
        values = np.array(list(fields[level].values()), dtype=float) if fields[level] else np.array([])
        coefficient, n = _correlate(fields[level], references[level])
        r_by_level[level] = None if coefficient is None else coefficient.r
        records.append((level,
                        float(values.mean()) if len(values) else float('nan'),
                        float(values.var()) if len(values) else float('nan'),
                        int(len(values)),
                        UNDEFINED if coefficient is None else coefficient.r,
                        n))
    summary = pd.DataFrame(records, columns=['level', 'mean', 'variance', 'support', 'r', 'n'])
    changes = tuple(flag_scale_changes(r_by_level, levels, threshold, pair=name))
    for change in changes:
        if change.flag:
            logger.warning(f"{name}: correlation moves {change.delta_r:+.3f} from {change.level_a} "
                           f"to {change.level_b}")
    return SensitivityReport(name, summary, changes)
