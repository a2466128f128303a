"""Localized optimal interpolation for gridded scalar fields.

The package corrects a gridded background field toward scattered point
observations with the classic minimum-variance linear update, localized to
a scanning radius around each grid cell, and ships a twin-experiment (OSSE)
harness that measures exactly how much error the correction removes against
a known synthetic truth.

Typical flow: build a :class:`GridSpec`, synthesize or load a background
:class:`FieldSeries`, sample an :class:`ObservationNetwork`, make an
:class:`ObservationBatch`, then call :func:`analyze_series` with an
:class:`OIConfig` — or just call :func:`run_osse` for the whole experiment.
"""

from .covariance import (CovarianceParams, ObsErrorModel, background_cov,
                         build_cov_matrix, estimate_background_variance)
from .grid import (Field, FieldSeries, FsvFormatError, GridSpec,
                   evaluation_mask, grid_distance, nearest_grid_index,
                   read_fsv, write_fsv)
from .obsnet import (ObservationBatch, ObservationNetwork, Station, apply_H,
                     make_pseudo_obs, read_obs_csv, read_stations_csv,
                     sample_stations, write_obs_csv, write_stations_csv)
from .oi import (AnalysisResult, LocalizedSolver, OIConfig,
                 SingularSystemError, StepAnalysis, analyze_full,
                 analyze_localized, analyze_series, kalman_gain)
from .osse import (OsseReport, SynthesisParams, default_osse_grid, run_osse,
                   synthesize_forecast, synthesize_nature)
from .seeding import (FORECAST_BIAS, GRID_MASK, NATURE_MODES, OBS_NOISE,
                      STATION_SAMPLE, SWEEP_NOISE, SWEEP_STATIONS,
                      derive_seed, derived_rng)
from .skill import (SkillReport, SweepResult, domain_mean_rmse, rmse_field,
                    skill_report, sweep, write_sweep_csv)

__version__ = "0.1.0"

__all__ = [
    "AnalysisResult", "CovarianceParams", "FORECAST_BIAS", "Field",
    "FieldSeries", "FsvFormatError", "GRID_MASK", "GridSpec",
    "LocalizedSolver", "NATURE_MODES", "OBS_NOISE", "OIConfig",
    "ObsErrorModel", "ObservationBatch", "ObservationNetwork", "OsseReport",
    "STATION_SAMPLE", "SWEEP_NOISE", "SWEEP_STATIONS", "SingularSystemError",
    "SkillReport", "Station", "StepAnalysis",
    "SweepResult", "SynthesisParams", "analyze_full", "analyze_localized",
    "analyze_series", "apply_H", "background_cov", "build_cov_matrix",
    "default_osse_grid", "derive_seed", "derived_rng", "domain_mean_rmse",
    "estimate_background_variance", "evaluation_mask", "grid_distance",
    "kalman_gain", "make_pseudo_obs", "nearest_grid_index", "read_fsv",
    "read_obs_csv", "read_stations_csv", "rmse_field", "run_osse",
    "sample_stations", "skill_report", "sweep", "synthesize_forecast",
    "synthesize_nature", "write_fsv", "write_obs_csv", "write_stations_csv",
    "write_sweep_csv", "__version__",
]
