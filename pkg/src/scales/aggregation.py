"""
Moving per-unit values between spatial levels through crosswalks
"""

import logging
from enum import Enum
from typing import Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from errors import ConfigError, InsufficientDataError
from geometry.crosswalk import Crosswalk

logger = logging.getLogger(__name__)

# Variables holding counts; only these may be aggregated by sum
COUNT_VARIABLES = ('homes', 'population')

UnitValues = Mapping[str, float]
LevelValues = Mapping[str, UnitValues]


class AggregationMethod(str, Enum):
    SUM = 'sum'
    MEAN = 'mean'
    POPULATION_WEIGHTED_MEAN = 'population_weighted_mean'
    AREAL_WEIGHTED = 'areal_weighted'

    @property
    def is_count(self) -> bool:
        """Only count-type variables may be summed"""
        return self is AggregationMethod.SUM

    @classmethod
    def parse(cls, name: Union[str, 'AggregationMethod']) -> 'AggregationMethod':
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"Unknown aggregation method {name!r}; "
                             f"expected one of {[m.value for m in cls]}") from None


def check_method(variable: str, method: Union[str, AggregationMethod],
                 count_variables: Sequence[str] = COUNT_VARIABLES) -> AggregationMethod:
    """Parse a variable's aggregation method, refusing sum for a non-count variable"""
    try:
        method = AggregationMethod.parse(method)
    except ValueError as e:
        raise ConfigError(f"{variable}: {e}") from None
    if method.is_count and variable not in count_variables:
        raise ConfigError(f"{variable!r} is not a count variable and cannot be aggregated by sum; "
                          f"count variables: {list(count_variables)}")
    return method


def parse_methods(text: str, defaults: Mapping[str, AggregationMethod],
                  count_variables: Sequence[str] = COUNT_VARIABLES) -> Dict[str, AggregationMethod]:
    """
    Parse ``variable:method,...`` over the defaults

    Raises:
        ConfigError: malformed entry, unknown method or sum on a non-count variable
    """
    methods = {name: check_method(name, method, count_variables) for name, method in defaults.items()}
    for item in (part.strip() for part in str(text).split(',')):
        if not item:
            continue
        variable, sep, method = item.partition(':')
        if not sep or not variable.strip():
            raise ConfigError(f"Invalid aggregation entry {item!r}: expected variable:method")
        methods[variable.strip()] = check_method(variable.strip(), method.strip(), count_variables)
    return methods


def aggregate(values: UnitValues, xwalk: Crosswalk, method: AggregationMethod,
              weights: Optional[UnitValues] = None) -> Dict[str, float]:
    """
    Aggregate source-level values onto the crosswalk's target level

    sum: Σ w_st v_s. The means divide Σ m_s w_st v_s by Σ m_s w_st with the mass
    m_s = 1 (mean), the population p_s (population_weighted_mean) or the source
    area (areal_weighted). Targets receiving zero total weight are absent.

    Args:
        values: source unit -> value; sources without a value do not contribute
        xwalk: crosswalk from the values' level
        method: aggregation rule
        weights: source unit -> population, required for population_weighted_mean

    Raises:
        InsufficientDataError: population weights missing for a valued source
    """
    method = AggregationMethod.parse(method)
    known = set(xwalk.weights)
    unknown = [s for s in values if s not in known]
    if unknown:
        raise KeyError(f"{len(unknown)} values for units outside the {xwalk.source_level} crosswalk "
                       f"(e.g. {sorted(unknown)[0]})")

    sources = [s for s in xwalk.sources() if s in values]
    targets = list(xwalk.targets())
    if not sources or not targets:
        return {}
    matrix = xwalk.to_matrix(sources, targets)
    v = np.array([values[s] for s in sources], dtype=float)

    if method in (AggregationMethod.SUM, AggregationMethod.MEAN):
        mass = np.ones(len(sources))
    elif method is AggregationMethod.POPULATION_WEIGHTED_MEAN:
        if weights is None:
            raise InsufficientDataError("population_weighted_mean requires population weights")
        missing = [s for s in sources if s not in weights]
        if missing:
            raise InsufficientDataError(f"No population weight for {len(missing)} units "
                                        f"(e.g. {missing[0]})")
        mass = np.array([weights[s] for s in sources], dtype=float)
    else:
        missing = [s for s in sources if s not in xwalk.source_areas]
        if missing:
            raise ValueError(f"Crosswalk carries no area for {missing[0]}")
        mass = np.array([xwalk.source_areas[s] for s in sources], dtype=float)

    support = matrix.T @ mass
    numerator = matrix.T @ (mass * v)
    result = {}
    for j, target in enumerate(targets):
        if support[j] <= 0:
            continue
        result[target] = float(numerator[j]) if method is AggregationMethod.SUM \
            else float(numerator[j] / support[j])
    logger.debug(f"Aggregated {len(sources)} {xwalk.source_level} values onto {len(result)} "
                 f"{xwalk.target_level} units ({method.value})")
    return result


def crosswalks_from_finest(levels: Sequence[str], xwalks: Iterable[Crosswalk]) -> Dict[str, Crosswalk]:
    """
    Crosswalks from the finest level (levels[0]) onto every level

    Direct finest -> level crosswalks are used when given; otherwise the chain
    through the previous level is composed.
    """
    by_pair = {(x.source_level, x.target_level): x for x in xwalks}
    finest = levels[0]
    result: Dict[str, Crosswalk] = {}
    for k, level in enumerate(levels):
        if k == 0:
            direct = by_pair.get((finest, finest))
            if direct is None:
                first = next((x for x in by_pair.values() if x.source_level == finest), None)
                if first is None:
                    raise ValueError(f"No crosswalk starts at the finest level {finest!r}")
                direct = Crosswalk.identity(first.weights, finest, first.source_areas)
            result[level] = direct
        elif (finest, level) in by_pair:
            result[level] = by_pair[(finest, level)]
        elif (levels[k - 1], level) in by_pair:
            result[level] = result[levels[k - 1]].compose(by_pair[(levels[k - 1], level)])
        else:
            raise ValueError(f"No crosswalk chain reaches level {level!r}")
    return result


def is_per_level(field: Union[UnitValues, LevelValues]) -> bool:
    return bool(field) and all(isinstance(v, Mapping) for v in field.values())


def level_fields(field: Union[UnitValues, LevelValues], levels: Sequence[str],
                 from_finest: Mapping[str, Crosswalk], method: AggregationMethod,
                 weights: Optional[UnitValues] = None) -> Dict[str, Optional[Dict[str, float]]]:
    """
    A variable at every level: aggregated from the finest level, or taken as given
    when the variable is already supplied per level (None where a level is missing)
    """
    if is_per_level(field):
        return {level: (dict(field[level]) if level in field else None) for level in levels}
    fields: Dict[str, Optional[Dict[str, float]]] = {}
    for level in levels:
        fields[level] = aggregate(field, from_finest[level], method, weights)
    return fields

