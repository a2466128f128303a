"""The twin experiment: synthetic truth, biased forecast, full OSSE runs.

An Observation System Simulation Experiment needs a known truth.  Here the
"nature" series is a sum of low-wavenumber traveling sinusoids and the
"forecast" is that truth plus a time-constant smooth bias field, standing in
for a model's systematic error.  Pseudo-observations sample the truth with
white noise; assimilating them into the forecast and scoring both against
the truth measures exactly how much error the analysis removes.

Every random ingredient (land-mask patch, nature modes, bias field, station
placement, observation noise) draws from its own stream derived from the
one master seed, so a run is fully reproducible from a single integer.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .grid import Field, FieldSeries, GridSpec, write_fsv
from .obsnet import (ObservationNetwork, make_pseudo_obs, sample_stations,
                     write_stations_csv)
from .oi import OIConfig, analyze_series
from .seeding import (FORECAST_BIAS, GRID_MASK, NATURE_MODES, OBS_NOISE,
                      STATION_SAMPLE, derive_seed, derived_rng)
from .skill import SkillReport, skill_report

__all__ = ["SynthesisParams", "OsseReport", "default_osse_grid",
           "synthesize_nature", "synthesize_forecast", "run_osse",
           "oi_config_dict", "synthesis_dict", "grid_dict"]


@dataclass(frozen=True)
class SynthesisParams:
    """Knobs for the synthetic nature and forecast fields.

    ``seed`` is the experiment's master seed; nature modes and the forecast
    bias draw from separate streams derived from it.
    """

    n_modes: int = 6
    amp: float = 2.0
    base: float = 280.0
    bias_amp: float = 1.0
    bias_corr_len: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (isinstance(self.n_modes, int) and self.n_modes >= 1):
            raise ValueError("n_modes must be an integer >= 1")
        for name in ("amp", "base", "bias_amp", "bias_corr_len"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError("%s must be a finite number, got %r"
                                 % (name, v))
        if self.amp < 0 or self.bias_amp < 0:
            raise ValueError("amp and bias_amp must be non-negative")
        if self.bias_corr_len <= 0:
            raise ValueError("bias_corr_len must be positive")


def default_osse_grid(seed: int, n_lat: int = 100, n_lon: int = 100,
                      ocean_fraction: float = 0.2, relaxation_width: int = 20,
                      lat0: float = 40.0, lon0: float = 0.0,
                      d_lat: float = 0.44, d_lon: float = 0.44) -> GridSpec:
    """Desk-scale experiment grid: all land except a seeded smooth ocean
    patch covering ``ocean_fraction`` of the cells.

    The patch is carved where a smoothed noise field is lowest, so it comes
    out as a few coherent blobs rather than salt-and-pepper cells.
    """
    if not (0.0 <= ocean_fraction < 1.0):
        raise ValueError("ocean_fraction must be in [0, 1)")
    mask = np.ones((n_lat, n_lon), dtype=bool)
    n_ocean = int(round(ocean_fraction * n_lat * n_lon))
    if n_ocean > 0:
        rng = derived_rng(seed, GRID_MASK)
        noise = rng.standard_normal((n_lat, n_lon))
        smooth = gaussian_filter(noise, sigma=min(n_lat, n_lon) / 10.0,
                                 mode="wrap")
        lowest = np.argpartition(smooth.ravel(), n_ocean - 1)[:n_ocean]
        mask.ravel()[lowest] = False
    return GridSpec(n_lat, n_lon, lat0, lon0, d_lat, d_lon, mask,
                    relaxation_width)


def _time_labels(n_steps: int) -> tuple[str, ...]:
    return tuple("t%03d" % t for t in range(n_steps))


def synthesize_nature(grid: GridSpec, n_steps: int,
                      params: SynthesisParams) -> FieldSeries:
    """Smooth synthetic truth: base level plus drifting low-wavenumber waves.

    Each mode is amp_m * sin(2*pi*(f_r*row/n_lat + f_c*col/n_lon) + phase +
    drift*t) with integer frequencies f drawn from 1..4, so the spatial
    power sits entirely at wavenumbers <= 4.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    rng = derived_rng(params.seed, NATURE_MODES)
    m = params.n_modes
    f_r = rng.integers(1, 5, m)
    f_c = rng.integers(1, 5, m)
    phases = rng.uniform(0.0, 2.0 * np.pi, m)
    drifts = rng.uniform(-0.3, 0.3, m)
    amps = params.amp * rng.uniform(0.5, 1.0, m)

    rowfrac = np.arange(grid.n_lat)[:, None] / grid.n_lat
    colfrac = np.arange(grid.n_lon)[None, :] / grid.n_lon
    spatial = 2.0 * np.pi * (f_r[:, None, None] * rowfrac
                             + f_c[:, None, None] * colfrac)

    steps = []
    for t in range(n_steps):
        waves = np.sin(spatial + (phases + drifts * t)[:, None, None])
        steps.append(Field(grid, params.base + np.tensordot(amps, waves, 1)))
    return FieldSeries(grid, tuple(steps), _time_labels(n_steps))


def synthesize_forecast(nature: FieldSeries,
                        params: SynthesisParams) -> FieldSeries:
    """Nature plus a time-constant smooth bias with pointwise standard
    deviation ``bias_amp``.

    The bias is seeded white noise smoothed by the Gaussian kernel
    exp(-d**2 / bias_corr_len**2) (wrap-around edges keep it stationary),
    then recentered and rescaled so its spatial standard deviation is
    exactly ``bias_amp``.
    """
    grid = nature.grid
    if params.bias_amp == 0:
        return FieldSeries(grid, nature.steps, nature.time_labels)
    rng = derived_rng(params.seed, FORECAST_BIAS)
    noise = rng.standard_normal(grid.shape)
    smooth = gaussian_filter(noise, sigma=params.bias_corr_len / math.sqrt(2.0),
                             mode="wrap")
    std = float(smooth.std())
    if std == 0.0:
        raise ValueError("grid too small to carry a bias field")
    bias = (smooth - smooth.mean()) * (params.bias_amp / std)
    steps = tuple(Field(grid, fld.values + bias) for fld in nature.steps)
    return FieldSeries(grid, steps, nature.time_labels)


@dataclass(frozen=True, eq=False)
class OsseReport:
    """Everything a finished OSSE produced.

    ``reduction`` is 1 - analysis/forecast domain-mean RMSE (NaN when the
    forecast error is exactly zero).  ``provenance`` holds every seed and
    parameter needed to reproduce the run.  The field series and network
    are kept so callers can inspect or re-score without re-running.
    """

    forecast_skill: SkillReport
    analysis_skill: SkillReport
    reduction: float
    provenance: dict
    nature: FieldSeries
    forecast: FieldSeries
    analysis: FieldSeries
    network: ObservationNetwork
    pa_diag: np.ndarray


def oi_config_dict(config: OIConfig) -> dict:
    """JSON-ready echo of an OIConfig (per-cell sigma2 echoes as a marker)."""
    cov = config.cov
    sigma2 = ("per-cell" if isinstance(cov.sigma2, np.ndarray)
              else cov.sigma2)
    return {
        "sigma2": sigma2,
        "corr_len": list(cov.corr_len),
        "scanning_radius": cov.scanning_radius,
        "max_influential": cov.max_influential,
        "obs_sigma2": config.obs_error.obs_sigma2,
        "jitter": config.jitter,
    }


def synthesis_dict(params: SynthesisParams) -> dict:
    return asdict(params)


def grid_dict(grid: GridSpec) -> dict:
    return {
        "n_lat": grid.n_lat, "n_lon": grid.n_lon,
        "lat0": grid.lat0, "lon0": grid.lon0,
        "d_lat": grid.d_lat, "d_lon": grid.d_lon,
        "relaxation_width": grid.relaxation_width,
        "n_land_cells": int(grid.land_mask.sum()),
    }


def _run_stage(name: str, fn):
    try:
        return fn()
    except Exception as exc:
        try:
            wrapped = type(exc)("%s stage: %s" % (name, exc))
        except Exception:
            raise exc
        raise wrapped from None


def run_osse(grid: GridSpec, n_steps: int, synth: SynthesisParams,
             n_stations: int, noise_sigma: float, config: OIConfig,
             out_dir: str | os.PathLike | None = None,
             workers: int = 1) -> OsseReport:
    """Run the full twin experiment and, if ``out_dir`` is given, write its
    products (nature/forecast/analysis/rmse FSV files, stations.csv,
    report.json) there.

    The pipeline: synthesize nature, add the forecast bias, sample stations,
    draw pseudo-observations of nature, assimilate them into the forecast
    step by step, then score forecast and analysis against nature.
    """
    seeds = {
        "master": int(synth.seed),
        "nature_modes": derive_seed(synth.seed, NATURE_MODES),
        "forecast_bias": derive_seed(synth.seed, FORECAST_BIAS),
        "station_sample": derive_seed(synth.seed, STATION_SAMPLE),
        "obs_noise": derive_seed(synth.seed, OBS_NOISE),
    }
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    nature = _run_stage("synthesize nature",
                        lambda: synthesize_nature(grid, n_steps, synth))
    forecast = _run_stage("synthesize forecast",
                          lambda: synthesize_forecast(nature, synth))
    timings["synthesize"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    network = _run_stage("sample stations", lambda: sample_stations(
        grid, n_stations, seeds["station_sample"]))
    batch = _run_stage("pseudo observations", lambda: make_pseudo_obs(
        nature, network, noise_sigma, seeds["obs_noise"]))
    timings["observations"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    result = _run_stage("analyze", lambda: analyze_series(
        forecast, batch, config, workers=workers))
    timings["analyze"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    forecast_skill = _run_stage("score forecast",
                                lambda: skill_report(forecast, nature))
    analysis_skill = _run_stage("score analysis",
                                lambda: skill_report(result.analysis, nature))
    timings["score"] = (time.perf_counter() - t0) * 1e3

    if forecast_skill.domain_mean > 0:
        reduction = 1.0 - analysis_skill.domain_mean / forecast_skill.domain_mean
    else:
        reduction = float("nan")

    provenance = {
        "seeds": seeds,
        "grid": grid_dict(grid),
        "synthesis": synthesis_dict(synth),
        "oi": oi_config_dict(config),
        "n_steps": int(n_steps),
        "n_stations": int(n_stations),
        "noise_sigma": float(noise_sigma),
    }
    report = OsseReport(forecast_skill, analysis_skill, reduction, provenance,
                        nature, forecast, result.analysis, network,
                        result.pa_diag)
    if out_dir is not None:
        _run_stage("write outputs", lambda: _write_osse_outputs(
            report, timings, out_dir))
    return report


def _write_osse_outputs(report: OsseReport, timings: dict,
                        out_dir: str | os.PathLike) -> None:
    os.makedirs(out_dir, exist_ok=True)
    grid = report.nature.grid
    write_fsv(report.nature, os.path.join(out_dir, "nature.fsv"))
    write_fsv(report.forecast, os.path.join(out_dir, "forecast.fsv"))
    write_fsv(report.analysis, os.path.join(out_dir, "analysis.fsv"))
    write_fsv(FieldSeries(grid, (report.forecast_skill.rmse_field,), ("rmse",)),
              os.path.join(out_dir, "rmse_forecast.fsv"))
    write_fsv(FieldSeries(grid, (report.analysis_skill.rmse_field,), ("rmse",)),
              os.path.join(out_dir, "rmse_analysis.fsv"))
    write_stations_csv(report.network, os.path.join(out_dir, "stations.csv"))
    doc = {
        "seeds": report.provenance["seeds"],
        "config_echo": {k: v for k, v in report.provenance.items()
                        if k != "seeds"},
        "forecast_rmse_mean": report.forecast_skill.domain_mean,
        "analysis_rmse_mean": report.analysis_skill.domain_mean,
        "reduction": (None if math.isnan(report.reduction)
                      else report.reduction),
        "timings_ms": timings,
    }
    with open(os.path.join(out_dir, "report.json"), "w",
              encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
