"""
Equal-area planar projection for tower and admin coordinates

Spherical Lambert azimuthal equal-area on the authalic sphere, centred on the
configured origin or on the tower centroid.
"""

import logging
from typing import Iterable, Tuple

import numpy as np
from pyproj import CRS, Transformer
from shapely.geometry.base import BaseGeometry
from shapely.ops import transform

logger = logging.getLogger(__name__)

AUTHALIC_RADIUS_M = 6371007.181


class Projection:
    """Forward/inverse LAEA transform between WGS84 lon/lat and planar meters"""

    def __init__(self, lon0: float, lat0: float):
        if not (-180.0 <= lon0 <= 180.0 and -90.0 <= lat0 <= 90.0):
            raise ValueError(f"Projection origin out of range: ({lon0}, {lat0})")
        self.lon0 = float(lon0)
        self.lat0 = float(lat0)
        self.proj4 = (f"+proj=laea +lat_0={self.lat0!r} +lon_0={self.lon0!r} +x_0=0 +y_0=0 "
                      f"+R={AUTHALIC_RADIUS_M} +units=m +no_defs")
        crs = CRS.from_proj4(self.proj4)
        self._forward = Transformer.from_crs("EPSG:4326", crs, always_xy=True)
        self._inverse = Transformer.from_crs(crs, "EPSG:4326", always_xy=True)

    @classmethod
    def centered_on(cls, lonlats: Iterable[Tuple[float, float]]) -> 'Projection':
        """Centre on the mean of the given lon/lat pairs; (0, 0) when empty"""
        points = np.asarray(list(lonlats), dtype=float).reshape(-1, 2)
        if len(points) == 0:
            logger.warning("No coordinates to centre the projection on; using (0, 0)")
            return cls(0.0, 0.0)
        lon0, lat0 = points.mean(axis=0)
        return cls(float(lon0), float(lat0))

    def forward(self, lon, lat):
        return self._forward.transform(lon, lat)

    def inverse(self, x, y):
        return self._inverse.transform(x, y)

    def forward_geometry(self, geometry: BaseGeometry) -> BaseGeometry:
        return transform(self._forward.transform, geometry)

    def inverse_geometry(self, geometry: BaseGeometry) -> BaseGeometry:
        return transform(self._inverse.transform, geometry)

    def __getstate__(self):
        return {'lon0': self.lon0, 'lat0': self.lat0}

    def __setstate__(self, state):
        self.__init__(state['lon0'], state['lat0'])

    def describe(self) -> dict:
        return {'proj4': self.proj4, 'lon0': self.lon0, 'lat0': self.lat0}

    def __eq__(self, other) -> bool:
        return isinstance(other, Projection) and self.proj4 == other.proj4

    def __hash__(self) -> int:
        return hash(self.proj4)

    def __repr__(self) -> str:
        return f"Projection(lon0={self.lon0}, lat0={self.lat0})"
