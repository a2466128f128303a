"""Tiny shared builders for the demo scripts."""

import numpy as np

from oiassim import GridSpec


def flat_grid(n_lat, n_lon, relaxation_width=0):
    """All-land grid on a unit-degree lattice."""
    return GridSpec(n_lat=n_lat, n_lon=n_lon, lat0=0.0, lon0=0.0,
                    d_lat=1.0, d_lon=1.0,
                    land_mask=np.ones((n_lat, n_lon), dtype=bool),
                    relaxation_width=relaxation_width)
