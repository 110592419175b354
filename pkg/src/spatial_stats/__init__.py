"""
Validation statistics: cosine angle, Pearson r, Getis-Ord G_i* hotspots
"""

from .similarity import CorrelationCoefficient, cosine_degrees, pearson
from .getis_ord import CLASSES, GiStarResult, HotspotAgreement, classify, getis_ord_gi_star, hotspot_agreement

__all__ = ['CorrelationCoefficient', 'cosine_degrees', 'pearson', 'CLASSES', 'GiStarResult',
           'HotspotAgreement', 'classify', 'getis_ord_gi_star', 'hotspot_agreement']
