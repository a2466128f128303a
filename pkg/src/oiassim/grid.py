"""Regular lat/lon grid geometry, land masking, and gridded field containers.

The grid is a plain regular latitude/longitude lattice: grid point
``(row, col)`` sits at ``(lat0 + row * d_lat, lon0 + col * d_lon)``.  All
distances used elsewhere in the package are measured in grid-index units,
not kilometres.  The module also implements the FSV text format that
persists a :class:`FieldSeries` (grid header, land mask, then one block of
values per time step).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "Field",
    "FieldSeries",
    "nearest_grid_index",
    "evaluation_mask",
    "grid_distance",
    "FsvFormatError",
    "write_fsv",
    "read_fsv",
]

FSV_VERSION = 1


def _fmt(v: float) -> str:
    # 17 significant digits: round-trips any float64 exactly.
    return "%.17g" % v


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Regular lat/lon grid with a land mask and a relaxation-zone width.

    ``relaxation_width`` is the number of grid points trimmed from each
    lateral boundary when evaluating skill; it does not affect the grid
    geometry itself.
    """

    n_lat: int
    n_lon: int
    lat0: float
    lon0: float
    d_lat: float
    d_lon: float
    land_mask: np.ndarray
    relaxation_width: int = 0

    def __post_init__(self) -> None:
        if self.n_lat < 1 or self.n_lon < 1:
            raise ValueError("grid must have at least one row and one column")
        if not (self.d_lat > 0.0 and self.d_lon > 0.0):
            raise ValueError("grid steps d_lat and d_lon must be positive")
        if self.relaxation_width < 0:
            raise ValueError("relaxation_width must be non-negative")
        if 2 * self.relaxation_width >= min(self.n_lat, self.n_lon):
            raise ValueError(
                "relaxation_width %d leaves no evaluation domain on a %dx%d grid"
                % (self.relaxation_width, self.n_lat, self.n_lon)
            )
        mask = np.asarray(self.land_mask, dtype=bool)
        if mask.size != self.n_lat * self.n_lon:
            raise ValueError(
                "land_mask has %d entries, expected n_lat*n_lon = %d"
                % (mask.size, self.n_lat * self.n_lon)
            )
        mask = mask.reshape(self.n_lat, self.n_lon).copy()
        mask.setflags(write=False)
        object.__setattr__(self, "land_mask", mask)

    @property
    def n_cells(self) -> int:
        return self.n_lat * self.n_lon

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_lat, self.n_lon)

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        """(lat, lon) of the center of cell ``(row, col)``."""
        return (self.lat0 + row * self.d_lat, self.lon0 + col * self.d_lon)

    def lats(self) -> np.ndarray:
        return self.lat0 + self.d_lat * np.arange(self.n_lat)

    def lons(self) -> np.ndarray:
        return self.lon0 + self.d_lon * np.arange(self.n_lon)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (
            (self.n_lat, self.n_lon, self.lat0, self.lon0, self.d_lat,
             self.d_lon, self.relaxation_width)
            == (other.n_lat, other.n_lon, other.lat0, other.lon0, other.d_lat,
                other.d_lon, other.relaxation_width)
            and np.array_equal(self.land_mask, other.land_mask)
        )

    def __hash__(self) -> int:
        return hash((self.n_lat, self.n_lon, self.lat0, self.lon0,
                     self.d_lat, self.d_lon, self.relaxation_width))


@dataclass(frozen=True, eq=False)
class Field:
    """One scalar (Kelvin) per grid cell, row-major by (lat index, lon index).

    Values on ocean cells may be NaN; land values must be finite.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.size != self.grid.n_cells:
            raise ValueError(
                "field has %d values, expected %d" % (values.size, self.grid.n_cells)
            )
        values = values.reshape(self.grid.shape).copy()
        if not np.all(np.isfinite(values[self.grid.land_mask])):
            raise ValueError("field has non-finite values on land cells")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class FieldSeries:
    """An ordered time sequence of :class:`Field` snapshots on one grid."""

    grid: GridSpec
    steps: tuple[Field, ...]
    time_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        steps = tuple(self.steps)
        labels = tuple(str(s) for s in self.time_labels)
        if not steps:
            raise ValueError("a field series needs at least one step")
        if len(labels) != len(steps):
            raise ValueError(
                "%d time labels for %d steps" % (len(labels), len(steps))
            )
        for k, fld in enumerate(steps):
            if fld.grid != self.grid:
                raise ValueError("step %d is on a different grid" % k)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "time_labels", labels)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def as_array(self) -> np.ndarray:
        """Stacked values with shape (n_steps, n_lat, n_lon)."""
        return np.stack([fld.values for fld in self.steps])

    @classmethod
    def from_array(cls, grid: GridSpec, values: np.ndarray,
                   time_labels: tuple[str, ...] | list[str]) -> "FieldSeries":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError("expected a (n_steps, n_lat, n_lon) array")
        steps = tuple(Field(grid, values[t]) for t in range(values.shape[0]))
        return cls(grid, steps, tuple(time_labels))


def nearest_grid_index(grid: GridSpec, lat: float, lon: float) -> tuple[int, int]:
    """Grid cell minimizing squared angular distance to ``(lat, lon)``.

    Ties break to the smaller row index, then the smaller column index.
    Raises ``ValueError`` for points farther than one full grid step outside
    the grid bounding box.
    """
    lat = float(lat)
    lon = float(lon)
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise ValueError("station coordinates must be finite")
    fi = (lat - grid.lat0) / grid.d_lat
    fj = (lon - grid.lon0) / grid.d_lon
    if fi < -1.0 or fi > grid.n_lat or fj < -1.0 or fj > grid.n_lon:
        raise ValueError(
            "point (%s, %s) lies more than one grid step outside the domain"
            % (_fmt(lat), _fmt(lon))
        )
    # ceil(x - 0.5) rounds to nearest with exact halves going down, which is
    # the smaller-index tie-break.
    row = min(max(math.ceil(fi - 0.5), 0), grid.n_lat - 1)
    col = min(max(math.ceil(fj - 0.5), 0), grid.n_lon - 1)
    return (row, col)


def evaluation_mask(grid: GridSpec) -> np.ndarray:
    """True exactly on land cells at least ``relaxation_width`` points from
    every lateral boundary."""
    rw = grid.relaxation_width
    interior = np.zeros(grid.shape, dtype=bool)
    interior[rw:grid.n_lat - rw, rw:grid.n_lon - rw] = True
    return interior & grid.land_mask


def grid_distance(a: tuple[int, int], b: tuple[int, int]) -> tuple[float, float]:
    """Per-axis absolute index distances ``(|drow|, |dcol|)`` in grid units."""
    return (abs(float(a[0]) - float(b[0])), abs(float(a[1]) - float(b[1])))


class FsvFormatError(ValueError):
    """Malformed or unsupported FSV content."""


def write_fsv(series: FieldSeries, path: str | os.PathLike) -> None:
    """Write a field series to ``path`` in FSV text format.

    Values are printed with 17 significant digits so a read-back reproduces
    the series bit for bit.
    """
    g = series.grid
    lines = ["#FSV %d" % FSV_VERSION]
    lines.append("#GRID %d %d %s %s %s %s %d" % (
        g.n_lat, g.n_lon, _fmt(g.lat0), _fmt(g.lon0),
        _fmt(g.d_lat), _fmt(g.d_lon), g.relaxation_width))
    lines.append("#MASK")
    for row in g.land_mask:
        lines.append("".join("1" if land else "0" for land in row))
    for label, fld in zip(series.time_labels, series.steps):
        if "\n" in label or "\r" in label:
            raise ValueError("time label %r contains a newline" % label)
        lines.append("#STEP %s" % label)
        for row in fld.values:
            lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_fsv(path: str | os.PathLike) -> FieldSeries:
    """Read a field series written by :func:`write_fsv`.

    Unknown format versions and any structural damage are rejected with the
    offending line number in the message.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()

    def fail(lineno: int, why: str) -> FsvFormatError:
        return FsvFormatError("%s: line %d: %s" % (path, lineno, why))

    if not lines:
        raise fail(1, "empty file, expected '#FSV %d'" % FSV_VERSION)
    head = lines[0].split()
    if len(head) != 2 or head[0] != "#FSV":
        raise fail(1, "expected '#FSV %d'" % FSV_VERSION)
    if head[1] != str(FSV_VERSION):
        raise fail(1, "unsupported FSV version %r" % head[1])

    if len(lines) < 2 or not lines[1].startswith("#GRID"):
        raise fail(2, "expected '#GRID' header")
    parts = lines[1].split()
    if len(parts) != 8:
        raise fail(2, "expected 7 grid header fields, got %d" % (len(parts) - 1))
    try:
        n_lat, n_lon = int(parts[1]), int(parts[2])
        lat0, lon0 = float(parts[3]), float(parts[4])
        d_lat, d_lon = float(parts[5]), float(parts[6])
        relaxation_width = int(parts[7])
    except ValueError as exc:
        raise fail(2, "bad grid header value (%s)" % exc) from None
    if n_lat < 1 or n_lon < 1:
        raise fail(2, "grid dimensions must be positive")

    if len(lines) < 3 or lines[2] != "#MASK":
        raise fail(3, "expected '#MASK'")
    if len(lines) < 3 + n_lat:
        raise fail(len(lines), "truncated mask: expected %d rows" % n_lat)
    mask = np.empty((n_lat, n_lon), dtype=bool)
    for i in range(n_lat):
        lineno = 4 + i
        row = lines[3 + i]
        if len(row) != n_lon or set(row) - {"0", "1"}:
            raise fail(lineno, "mask row must be %d characters of 0/1" % n_lon)
        mask[i] = np.frombuffer(row.encode("ascii"), dtype=np.uint8) == ord("1")

    try:
        grid = GridSpec(n_lat, n_lon, lat0, lon0, d_lat, d_lon, mask,
                        relaxation_width)
    except ValueError as exc:
        raise fail(2, "invalid grid header: %s" % exc) from None

    steps: list[Field] = []
    labels: list[str] = []
    pos = 3 + n_lat
    while pos < len(lines):
        lineno = pos + 1
        line = lines[pos]
        if not line.startswith("#STEP "):
            raise fail(lineno, "expected '#STEP <label>'")
        label = line[len("#STEP "):]
        if not label:
            raise fail(lineno, "empty step label")
        if len(lines) < pos + 1 + n_lat:
            raise fail(len(lines), "truncated step %r: expected %d value rows"
                       % (label, n_lat))
        values = np.empty((n_lat, n_lon), dtype=np.float64)
        for i in range(n_lat):
            row_lineno = lineno + 1 + i
            cells = lines[pos + 1 + i].split(",")
            if len(cells) != n_lon:
                raise fail(row_lineno, "expected %d values, got %d"
                           % (n_lon, len(cells)))
            try:
                values[i] = [float(c) for c in cells]
            except ValueError as exc:
                raise fail(row_lineno, "bad value (%s)" % exc) from None
        try:
            steps.append(Field(grid, values))
        except ValueError as exc:
            raise fail(lineno, "invalid step %r: %s" % (label, exc)) from None
        labels.append(label)
        pos += 1 + n_lat

    if not steps:
        raise fail(len(lines), "file contains no steps")
    return FieldSeries(grid, tuple(steps), tuple(labels))
