"""RMSE skill scoring and the correlation-length / station-count sweep.

The skill metric is per-cell root-mean-square error over time (population
divisor), summarized as its unweighted mean over the evaluation mask (land
cells clear of the relaxation zone).  ``sweep`` re-runs the assimilation
over a grid of correlation lengths and station counts and tabulates the
domain-mean RMSE of analysis versus nature, the standard hyperparameter
tuning picture.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceParams
from .grid import Field, FieldSeries, GridSpec, _fmt, evaluation_mask
from .obsnet import make_pseudo_obs, sample_stations
from .oi import OIConfig, SingularSystemError, analyze_series
from .seeding import SWEEP_NOISE, SWEEP_STATIONS, derive_seed

__all__ = ["SkillReport", "SweepResult", "rmse_field", "domain_mean_rmse",
           "skill_report", "sweep", "write_sweep_csv"]


@dataclass(frozen=True, eq=False)
class SkillReport:
    """Per-cell RMSE plus its evaluation-domain summary."""

    rmse_field: Field
    domain_mean: float
    n_cells: int

    def __post_init__(self) -> None:
        if self.n_cells < 1:
            raise ValueError("a skill report needs at least one evaluated cell")
        if not (math.isfinite(self.domain_mean) and self.domain_mean >= 0):
            raise ValueError("domain_mean must be finite and non-negative")


def rmse_field(a: FieldSeries, b: FieldSeries) -> Field:
    """Per-cell sqrt of the time mean of (a - b)**2, divisor = step count."""
    if a.grid != b.grid:
        raise ValueError("series are on different grids")
    if a.n_steps != b.n_steps:
        raise ValueError("series have %d and %d steps" % (a.n_steps, b.n_steps))
    diff = a.as_array() - b.as_array()
    return Field(a.grid, np.sqrt(np.mean(diff * diff, axis=0)))


def domain_mean_rmse(rmse: Field, grid: GridSpec | None = None,
                     area_weighted: bool = False) -> float:
    """Mean of a per-cell RMSE field over the evaluation mask.

    Unweighted by default; ``area_weighted`` applies cos(latitude) weights.
    """
    if grid is None:
        grid = rmse.grid
    elif grid != rmse.grid:
        raise ValueError("rmse field is on a different grid")
    mask = evaluation_mask(grid)
    if not mask.any():
        raise ValueError("evaluation mask is empty")
    if not area_weighted:
        return float(np.mean(rmse.values[mask]))
    w = np.cos(np.deg2rad(grid.lats()))[:, None] * np.ones(grid.shape)
    return float(np.sum(w[mask] * rmse.values[mask]) / np.sum(w[mask]))


def skill_report(a: FieldSeries, b: FieldSeries,
                 area_weighted: bool = False) -> SkillReport:
    """Score series ``a`` against series ``b`` (order does not matter)."""
    rmse = rmse_field(a, b)
    mean = domain_mean_rmse(rmse, a.grid, area_weighted=area_weighted)
    return SkillReport(rmse, mean, int(evaluation_mask(a.grid).sum()))


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Domain-mean RMSE over a (correlation length, station count) grid.

    ``mean_rmse[i, j]`` scores ``l_values[i]`` with ``n_values[j]``.
    ``argmin_l[j]`` is the L minimizing column j (first index on ties); it
    is derived from ``mean_rmse``, not stored independently.
    """

    l_values: tuple[float, ...]
    n_values: tuple[int, ...]
    mean_rmse: np.ndarray
    argmin_l: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.mean_rmse, dtype=np.float64).copy()
        if m.shape != (len(self.l_values), len(self.n_values)):
            raise ValueError("mean_rmse shape %s does not match axes (%d, %d)"
                             % (m.shape, len(self.l_values), len(self.n_values)))
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("mean_rmse must be finite and non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "mean_rmse", m)
        object.__setattr__(self, "l_values", tuple(float(v) for v in self.l_values))
        object.__setattr__(self, "n_values", tuple(int(v) for v in self.n_values))
        object.__setattr__(
            self, "argmin_l",
            tuple(self.l_values[int(i)] for i in np.argmin(m, axis=0)))


def sweep(nature: FieldSeries, forecast: FieldSeries, l_values, n_values,
          base_config: OIConfig, seed: int, noise_sigma: float | None = None,
          workers: int = 1) -> SweepResult:
    """Score the analysis over every (correlation length, station count) pair.

    For each N one network is sampled (nested across N: larger counts extend
    smaller ones) and one pseudo-observation batch drawn, both derived
    deterministically from ``seed``; the noise stream depends on the value
    of N only, so duplicate axis entries yield identical rows/columns.  Each
    L runs with corr_len = (L, L) and scanning_radius = 3L; everything else
    comes from ``base_config``.  ``noise_sigma`` defaults to the square root
    of the base config's obs_sigma2.
    """
    if forecast.grid != nature.grid:
        raise ValueError("nature and forecast are on different grids")
    if forecast.n_steps != nature.n_steps:
        raise ValueError("nature has %d steps, forecast %d"
                         % (nature.n_steps, forecast.n_steps))
    l_values = tuple(float(v) for v in l_values)
    n_values = tuple(int(v) for v in n_values)
    if not l_values or not n_values:
        raise ValueError("sweep axes must be non-empty")
    if any(not (math.isfinite(v) and v > 0) for v in l_values):
        raise ValueError("correlation lengths must be finite and positive")
    if any(v < 1 for v in n_values):
        raise ValueError("station counts must be at least 1")
    if noise_sigma is None:
        noise_sigma = math.sqrt(base_config.obs_error.obs_sigma2)

    grid = nature.grid
    station_seed = derive_seed(seed, SWEEP_STATIONS)
    base_cov = base_config.cov
    mean = np.empty((len(l_values), len(n_values)))
    for j, n in enumerate(n_values):
        network = sample_stations(grid, n, station_seed)
        batch = make_pseudo_obs(nature, network, noise_sigma,
                                derive_seed(seed, SWEEP_NOISE, n))
        for i, l in enumerate(l_values):
            cov = CovarianceParams(sigma2=base_cov.sigma2, corr_len=l,
                                   scanning_radius=3.0 * l,
                                   max_influential=base_cov.max_influential)
            config = OIConfig(cov, base_config.obs_error, base_config.jitter)
            try:
                result = analyze_series(forecast, batch, config,
                                        workers=workers)
                mean[i, j] = skill_report(result.analysis, nature).domain_mean
            except (ValueError, SingularSystemError) as exc:
                raise type(exc)("sweep cell (L=%s, N=%d): %s"
                                % (_fmt(l), n, exc)) from None
    return SweepResult(l_values, n_values, mean)


def write_sweep_csv(result: SweepResult, path: str | os.PathLike) -> None:
    """Write ``L,N,mean_rmse`` rows, L-major, at round-trip precision."""
    lines = ["L,N,mean_rmse"]
    for i, l in enumerate(result.l_values):
        for j, n in enumerate(result.n_values):
            lines.append("%s,%d,%s" % (_fmt(l), n, _fmt(result.mean_rmse[i, j])))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
