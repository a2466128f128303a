"""Shared construction helpers for the test suite."""

from __future__ import annotations

import numpy as np

from oiassim import FieldSeries, GridSpec


def land_grid(n_lat, n_lon, relaxation_width=0, lat0=0.0, lon0=0.0,
              d_lat=1.0, d_lon=1.0, land_mask=None):
    """A grid on a unit-degree lattice, all land unless a mask is given."""
    if land_mask is None:
        land_mask = np.ones((n_lat, n_lon), dtype=bool)
    return GridSpec(n_lat, n_lon, lat0, lon0, d_lat, d_lon,
                    np.asarray(land_mask, dtype=bool), relaxation_width)


def make_series(grid, *step_values, labels=None):
    """Stack per-step arrays (or scalars) into a FieldSeries."""
    steps = np.stack([np.broadcast_to(np.asarray(v, dtype=float), grid.shape)
                      for v in step_values])
    if labels is None:
        labels = ["t%03d" % k for k in range(steps.shape[0])]
    return FieldSeries.from_array(grid, steps, list(labels))
