"""
Spatial aggregation between levels and the multi-scale correlation report
"""

from .aggregation import (COUNT_VARIABLES, AggregationMethod, aggregate, check_method, crosswalks_from_finest,
                          level_fields, parse_methods)
from .report import (UNDEFINED, MultiScaleReport, ScaleChange, SensitivityReport, flag_scale_changes,
                     multi_scale_correlate, pair_name, sensitivity_report)

__all__ = ['COUNT_VARIABLES', 'AggregationMethod', 'aggregate', 'check_method', 'crosswalks_from_finest',
           'level_fields', 'parse_methods', 'UNDEFINED',
           'MultiScaleReport', 'ScaleChange', 'SensitivityReport', 'flag_scale_changes',
           'multi_scale_correlate', 'pair_name', 'sensitivity_report']
