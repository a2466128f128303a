"""Observation networks, the nearest-neighbor operator H, and
pseudo-observations.

A station is snapped to its nearest grid cell; applying H to a field just
reads the field at each station's cell, so H is a 0/1 selection matrix.
Stations must sit on land cells, since ocean cells carry no usable values.

``sample_stations`` draws networks as a prefix of one random permutation of
the land cells, so networks drawn from the same seed are nested: the first
n stations of a larger network are exactly the smaller network.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .covariance import ObsErrorModel
from .grid import Field, FieldSeries, GridSpec, _fmt, nearest_grid_index

__all__ = ["Station", "ObservationNetwork", "ObservationBatch", "apply_H",
           "sample_stations", "make_pseudo_obs", "write_stations_csv",
           "read_stations_csv", "write_obs_csv", "read_obs_csv"]


@dataclass(frozen=True)
class Station:
    """One observing site; coordinates need not be a cell center."""

    station_id: int
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError("station %r has non-finite coordinates"
                             % (self.station_id,))


@dataclass(frozen=True, eq=False)
class ObservationNetwork:
    """A fixed set of stations on one grid.

    Station ids must be unique and sorted ascending in site order.  Every
    station's nearest grid cell must be a land cell.  ``cells`` gives the
    snapped (row, col) per station, aligned with ``sites``.
    """

    grid: GridSpec
    sites: tuple[Station, ...]

    def __post_init__(self) -> None:
        sites = tuple(self.sites)
        if not sites:
            raise ValueError("an observation network needs at least one station")
        ids = [s.station_id for s in sites]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("station ids must be unique and sorted ascending")
        cells = np.empty((len(sites), 2), dtype=np.intp)
        for k, st in enumerate(sites):
            row, col = nearest_grid_index(self.grid, st.lat, st.lon)
            if not self.grid.land_mask[row, col]:
                raise ValueError(
                    "station %d at (%s, %s) falls on an ocean cell"
                    % (st.station_id, _fmt(st.lat), _fmt(st.lon)))
            cells[k] = (row, col)
        cells.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "_cells", cells)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def cells(self) -> np.ndarray:
        """(n_sites, 2) snapped (row, col) indices, aligned with sites."""
        return self._cells

    @property
    def station_ids(self) -> np.ndarray:
        return np.array([s.station_id for s in self.sites], dtype=np.intp)


def apply_H(field: Field, network: ObservationNetwork) -> np.ndarray:
    """Evaluate a field at the network's cells (the observation operator)."""
    if field.grid != network.grid:
        raise ValueError("field and network are on different grids")
    cells = network.cells
    return field.values[cells[:, 0], cells[:, 1]]


@dataclass(frozen=True, eq=False)
class ObservationBatch:
    """Observed values per time step, aligned with a network's site order.

    ``error_model`` records the observation error variance the values carry
    (for pseudo-observations, the square of the injected noise sigma) and
    ``noise_seed`` the seed that generated them, both kept for provenance.
    """

    network: ObservationNetwork
    values: np.ndarray
    time_labels: tuple[str, ...]
    error_model: ObsErrorModel
    noise_seed: int = 0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        labels = tuple(str(s) for s in self.time_labels)
        if values.ndim != 2:
            raise ValueError("expected (n_steps, n_sites) observation values")
        if values.shape[0] < 1:
            raise ValueError("an observation batch needs at least one step")
        if values.shape[0] != len(labels):
            raise ValueError("%d time labels for %d observation steps"
                             % (len(labels), values.shape[0]))
        if values.shape[1] != self.network.n_sites:
            raise ValueError("observation values have %d columns for %d sites"
                             % (values.shape[1], self.network.n_sites))
        if not np.all(np.isfinite(values)):
            raise ValueError("observation values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_labels", labels)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]


def sample_stations(grid: GridSpec, n: int, seed: int) -> ObservationNetwork:
    """Sample ``n`` distinct land cells uniformly and snap stations to their
    centers.

    Station ids are 0..n-1 in draw order.  The draw is a prefix of one
    permutation of the land cells, so for a fixed seed the n-station network
    is a prefix of the (n+1)-station network.
    """
    land_flat = np.flatnonzero(grid.land_mask.ravel())
    if n < 1:
        raise ValueError("station count must be at least 1")
    if n > land_flat.size:
        raise ValueError("cannot place %d stations on %d land cells"
                         % (n, land_flat.size))
    rng = np.random.default_rng(seed)
    chosen = land_flat[rng.permutation(land_flat.size)[:n]]
    sites = []
    for sid, flat in enumerate(chosen):
        row, col = divmod(int(flat), grid.n_lon)
        lat, lon = grid.cell_center(row, col)
        sites.append(Station(sid, lat, lon))
    return ObservationNetwork(grid, tuple(sites))


def make_pseudo_obs(nature: FieldSeries, network: ObservationNetwork,
                    noise_sigma: float, seed: int) -> ObservationBatch:
    """Sample a nature series at the stations and add white Gaussian noise.

    ``noise_sigma`` is the noise standard deviation; zero gives exact
    observations.  Draws are independent across sites and steps.
    """
    if network.grid != nature.grid:
        raise ValueError("network and nature series are on different grids")
    if not (math.isfinite(noise_sigma) and noise_sigma >= 0):
        raise ValueError("noise_sigma must be finite and non-negative")
    truth = np.stack([apply_H(fld, network) for fld in nature.steps])
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(truth.shape)
    return ObservationBatch(network, truth + noise_sigma * noise,
                            nature.time_labels,
                            ObsErrorModel(noise_sigma * noise_sigma),
                            noise_seed=int(seed))


def write_stations_csv(network: ObservationNetwork,
                       path: str | os.PathLike) -> None:
    """Write ``station_id,lat,lon`` rows (with header) for a network."""
    lines = ["station_id,lat,lon"]
    for st in network.sites:
        lines.append("%d,%s,%s" % (st.station_id, _fmt(st.lat), _fmt(st.lon)))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_stations_csv(grid: GridSpec,
                      path: str | os.PathLike) -> ObservationNetwork:
    """Read a network written by :func:`write_stations_csv`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()

    def fail(lineno: int, why: str) -> ValueError:
        return ValueError("%s: line %d: %s" % (path, lineno, why))

    if not lines or lines[0] != "station_id,lat,lon":
        raise fail(1, "expected header 'station_id,lat,lon'")
    sites = []
    for k, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise fail(k, "expected 3 fields, got %d" % len(parts))
        try:
            sites.append(Station(int(parts[0]), float(parts[1]),
                                 float(parts[2])))
        except ValueError as exc:
            raise fail(k, "bad station row (%s)" % exc) from None
    if not sites:
        raise fail(len(lines), "file contains no stations")
    try:
        return ObservationNetwork(grid, tuple(sites))
    except ValueError as exc:
        raise ValueError("%s: %s" % (path, exc)) from None


OBS_VERSION = 1


def write_obs_csv(batch: ObservationBatch, path: str | os.PathLike) -> None:
    """Write an observation batch as CSV.

    Rows are ``time_label,station_id,lat,lon,value`` grouped by step in
    series order; the batch's error variance and noise seed go into ``#``
    metadata lines so downstream runs can echo the provenance.
    """
    lines = ["#OBSV %d" % OBS_VERSION,
             "#OBS_SIGMA2 %s" % _fmt(batch.error_model.obs_sigma2),
             "#NOISE_SEED %d" % batch.noise_seed,
             "time_label,station_id,lat,lon,value"]
    for t, label in enumerate(batch.time_labels):
        if "," in label or "\n" in label or "\r" in label:
            raise ValueError("time label %r cannot appear in CSV" % label)
        for k, st in enumerate(batch.network.sites):
            lines.append("%s,%d,%s,%s,%s" % (
                label, st.station_id, _fmt(st.lat), _fmt(st.lon),
                _fmt(batch.values[t, k])))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_obs_csv(grid: GridSpec, path: str | os.PathLike) -> ObservationBatch:
    """Read observations written by :func:`write_obs_csv`.

    The network is reconstructed from the rows of the first step; every
    later step must list exactly the same stations (any row order).
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()

    def fail(lineno: int, why: str) -> ValueError:
        return ValueError("%s: line %d: %s" % (path, lineno, why))

    if not lines:
        raise fail(1, "empty file, expected '#OBSV %d'" % OBS_VERSION)
    head = lines[0].split()
    if len(head) != 2 or head[0] != "#OBSV":
        raise fail(1, "expected '#OBSV %d'" % OBS_VERSION)
    if head[1] != str(OBS_VERSION):
        raise fail(1, "unsupported observation format version %r" % head[1])

    obs_sigma2: float | None = None
    noise_seed = 0
    pos = 1
    while pos < len(lines) and lines[pos].startswith("#"):
        parts = lines[pos].split()
        if parts[0] == "#OBS_SIGMA2" and len(parts) == 2:
            try:
                obs_sigma2 = float(parts[1])
            except ValueError:
                raise fail(pos + 1, "bad #OBS_SIGMA2 value") from None
        elif parts[0] == "#NOISE_SEED" and len(parts) == 2:
            try:
                noise_seed = int(parts[1])
            except ValueError:
                raise fail(pos + 1, "bad #NOISE_SEED value") from None
        else:
            raise fail(pos + 1, "unknown metadata line %r" % lines[pos])
        pos += 1
    if obs_sigma2 is None:
        raise fail(pos + 1, "missing #OBS_SIGMA2 metadata line")

    header = "time_label,station_id,lat,lon,value"
    if pos >= len(lines) or lines[pos] != header:
        raise fail(pos + 1, "expected header %r" % header)
    pos += 1

    labels: list[str] = []
    rows: dict[str, dict[int, float]] = {}
    first_order: list[tuple[int, float, float]] = []
    for k in range(pos, len(lines)):
        line = lines[k]
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise fail(k + 1, "expected 5 fields, got %d" % len(parts))
        label = parts[0]
        try:
            sid = int(parts[1])
            lat, lon, value = float(parts[2]), float(parts[3]), float(parts[4])
        except ValueError as exc:
            raise fail(k + 1, "bad observation row (%s)" % exc) from None
        if label not in rows:
            labels.append(label)
            rows[label] = {}
        if sid in rows[label]:
            raise fail(k + 1, "duplicate station %d in step %r" % (sid, label))
        rows[label][sid] = value
        if len(labels) == 1:
            first_order.append((sid, lat, lon))

    if not labels:
        raise fail(len(lines), "file contains no observation rows")

    sites = tuple(Station(sid, lat, lon) for sid, lat, lon in first_order)
    try:
        network = ObservationNetwork(grid, sites)
    except ValueError as exc:
        raise ValueError("%s: %s" % (path, exc)) from None

    id_pos = {st.station_id: k for k, st in enumerate(sites)}
    values = np.empty((len(labels), len(sites)), dtype=np.float64)
    for t, label in enumerate(labels):
        step = rows[label]
        if set(step) != set(id_pos):
            raise ValueError(
                "%s: step %r does not list the same stations as the first step"
                % (path, label))
        for sid, value in step.items():
            values[t, id_pos[sid]] = value
    return ObservationBatch(network, values, tuple(labels),
                            ObsErrorModel(obs_sigma2), noise_seed=noise_seed)
