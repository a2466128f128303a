"""Command-line front end: config handling and the four subcommands.

    oi-assim generate   --config cfg.json --output out
    oi-assim assimilate background.fsv obs.csv --config cfg.json --output out
    oi-assim sweep      --config cfg.json --output out
    oi-assim evaluate   a.fsv b.fsv --output out

The config is one JSON document; every key has a default, unknown keys are
rejected by name, and --seed/--output override the file.  --threads (or the
OI_ASSIM_THREADS env var) is a parallelism hint only and never changes
results.  On failure the process exits nonzero after printing a single
`error:<category>: <detail>` line to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .covariance import CovarianceParams, ObsErrorModel
from .grid import Field, FieldSeries, FsvFormatError, _fmt, read_fsv, write_fsv
from .obsnet import (make_pseudo_obs, read_obs_csv, sample_stations,
                     write_obs_csv, write_stations_csv)
from .oi import OIConfig, SingularSystemError, analyze_series
from .osse import (SynthesisParams, default_osse_grid, grid_dict,
                   oi_config_dict, synthesis_dict, synthesize_forecast,
                   synthesize_nature)
from .seeding import (OBS_NOISE, STATION_SAMPLE, SWEEP_NOISE, SWEEP_STATIONS,
                      derive_seed)
from .skill import domain_mean_rmse, rmse_field, skill_report, sweep, \
    write_sweep_csv

__all__ = ["RunConfig", "GridParams", "ConfigError", "load_config",
           "save_config", "config_to_dict", "build_grid", "cmd_generate",
           "cmd_assimilate", "cmd_sweep", "cmd_evaluate", "main"]


class ConfigError(ValueError):
    """Malformed run configuration."""


@dataclass(frozen=True)
class GridParams:
    """Grid geometry for generated experiments; the land mask itself is
    derived from the master seed (a smooth ocean patch of the given
    fraction)."""

    n_lat: int = 100
    n_lon: int = 100
    lat0: float = 40.0
    lon0: float = 0.0
    d_lat: float = 0.44
    d_lon: float = 0.44
    relaxation_width: int = 20
    ocean_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.n_lat < 1 or self.n_lon < 1:
            raise ConfigError("grid must have at least one row and one column")
        if not (self.d_lat > 0 and self.d_lon > 0):
            raise ConfigError("grid steps d_lat and d_lon must be positive")
        if self.relaxation_width < 0:
            raise ConfigError("relaxation_width must be non-negative")
        if 2 * self.relaxation_width >= min(self.n_lat, self.n_lon):
            raise ConfigError("relaxation_width %d leaves no evaluation domain"
                              % self.relaxation_width)
        if not (0.0 <= self.ocean_fraction < 1.0):
            raise ConfigError("ocean_fraction must be in [0, 1)")


_DEFAULT_OI = OIConfig(CovarianceParams(sigma2=1.0, corr_len=3.0),
                       ObsErrorModel(0.25))


@dataclass(frozen=True)
class RunConfig:
    """One experiment configuration; defaults follow the standard OSSE."""

    master_seed: int = 0
    output_dir: str = "."
    n_steps: int = 12
    grid: GridParams = GridParams()
    synthesis: SynthesisParams = SynthesisParams()
    oi: OIConfig = _DEFAULT_OI
    n_stations: int = 500
    noise_sigma: float = 0.5
    l_values: tuple[float, ...] = tuple(float(v) for v in range(1, 11))
    n_values: tuple[int, ...] = (100, 200)

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ConfigError("n_steps must be at least 1")
        if self.n_stations < 1:
            raise ConfigError("n_stations must be at least 1")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ConfigError("noise_sigma must be finite and non-negative")
        if not self.l_values or not self.n_values:
            raise ConfigError("sweep axes must be non-empty")


def _check_keys(doc: dict, allowed: tuple[str, ...], where: str) -> None:
    for key in doc:
        if key not in allowed:
            prefix = where + "." if where else ""
            raise ConfigError("unknown key '%s%s'" % (prefix, key))


def _as_int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError("%s must be an integer, got %r" % (where, v))
    return v


def _as_float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("%s must be a number, got %r" % (where, v))
    return float(v)


def load_config(source: str | os.PathLike | dict) -> RunConfig:
    """Build a RunConfig from a JSON file path (or an already-parsed dict).

    Every key is optional; unknown keys anywhere are rejected by name;
    component invariants are validated here, not at first use.
    """
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("%s: %s" % (source, exc)) from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _check_keys(doc, ("master_seed", "output_dir", "n_steps", "grid",
                      "synthesis", "oi", "observations", "sweep"), "")

    master_seed = _as_int(doc.get("master_seed", 0), "master_seed")
    output_dir = doc.get("output_dir", ".")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir must be a string")
    n_steps = _as_int(doc.get("n_steps", 12), "n_steps")

    g = doc.get("grid", {})
    if not isinstance(g, dict):
        raise ConfigError("'grid' must be an object")
    _check_keys(g, ("n_lat", "n_lon", "lat0", "lon0", "d_lat", "d_lon",
                    "relaxation_width", "ocean_fraction"), "grid")
    defaults = GridParams()
    grid = GridParams(
        n_lat=_as_int(g.get("n_lat", defaults.n_lat), "grid.n_lat"),
        n_lon=_as_int(g.get("n_lon", defaults.n_lon), "grid.n_lon"),
        lat0=_as_float(g.get("lat0", defaults.lat0), "grid.lat0"),
        lon0=_as_float(g.get("lon0", defaults.lon0), "grid.lon0"),
        d_lat=_as_float(g.get("d_lat", defaults.d_lat), "grid.d_lat"),
        d_lon=_as_float(g.get("d_lon", defaults.d_lon), "grid.d_lon"),
        relaxation_width=_as_int(
            g.get("relaxation_width", defaults.relaxation_width),
            "grid.relaxation_width"),
        ocean_fraction=_as_float(
            g.get("ocean_fraction", defaults.ocean_fraction),
            "grid.ocean_fraction"))

    s = doc.get("synthesis", {})
    if not isinstance(s, dict):
        raise ConfigError("'synthesis' must be an object")
    _check_keys(s, ("n_modes", "amp", "base", "bias_amp", "bias_corr_len"),
                "synthesis")
    sdef = SynthesisParams()
    try:
        synthesis = SynthesisParams(
            n_modes=_as_int(s.get("n_modes", sdef.n_modes), "synthesis.n_modes"),
            amp=_as_float(s.get("amp", sdef.amp), "synthesis.amp"),
            base=_as_float(s.get("base", sdef.base), "synthesis.base"),
            bias_amp=_as_float(s.get("bias_amp", sdef.bias_amp),
                               "synthesis.bias_amp"),
            bias_corr_len=_as_float(s.get("bias_corr_len", sdef.bias_corr_len),
                                    "synthesis.bias_corr_len"),
            seed=master_seed)
    except ValueError as exc:
        raise ConfigError("synthesis: %s" % exc) from None

    o = doc.get("oi", {})
    if not isinstance(o, dict):
        raise ConfigError("'oi' must be an object")
    _check_keys(o, ("sigma2", "corr_len", "scanning_radius", "max_influential",
                    "obs_sigma2", "jitter"), "oi")
    corr_len = o.get("corr_len", 3.0)
    if isinstance(corr_len, list):
        if len(corr_len) != 2:
            raise ConfigError("oi.corr_len pair must have exactly 2 entries")
        corr_len = (_as_float(corr_len[0], "oi.corr_len[0]"),
                    _as_float(corr_len[1], "oi.corr_len[1]"))
    else:
        corr_len = _as_float(corr_len, "oi.corr_len")
    scanning_radius = o.get("scanning_radius")
    if scanning_radius is not None:
        scanning_radius = _as_float(scanning_radius, "oi.scanning_radius")
    try:
        oi = OIConfig(
            CovarianceParams(
                sigma2=_as_float(o.get("sigma2", 1.0), "oi.sigma2"),
                corr_len=corr_len,
                scanning_radius=scanning_radius,
                max_influential=_as_int(o.get("max_influential", 20),
                                        "oi.max_influential")),
            ObsErrorModel(_as_float(o.get("obs_sigma2", 0.25),
                                    "oi.obs_sigma2")),
            jitter=_as_float(o.get("jitter", 0.0), "oi.jitter"))
    except ValueError as exc:
        raise ConfigError("oi: %s" % exc) from None

    ob = doc.get("observations", {})
    if not isinstance(ob, dict):
        raise ConfigError("'observations' must be an object")
    _check_keys(ob, ("n_stations", "noise_sigma"), "observations")
    n_stations = _as_int(ob.get("n_stations", 500), "observations.n_stations")
    noise_sigma = _as_float(ob.get("noise_sigma", 0.5),
                            "observations.noise_sigma")

    sw = doc.get("sweep", {})
    if not isinstance(sw, dict):
        raise ConfigError("'sweep' must be an object")
    _check_keys(sw, ("l_values", "n_values"), "sweep")
    l_raw = sw.get("l_values", [float(v) for v in range(1, 11)])
    n_raw = sw.get("n_values", [100, 200])
    if not isinstance(l_raw, list) or not isinstance(n_raw, list):
        raise ConfigError("sweep axes must be arrays")
    l_values = tuple(_as_float(v, "sweep.l_values[%d]" % k)
                     for k, v in enumerate(l_raw))
    n_values = tuple(_as_int(v, "sweep.n_values[%d]" % k)
                     for k, v in enumerate(n_raw))

    return RunConfig(master_seed=master_seed, output_dir=output_dir,
                     n_steps=n_steps, grid=grid, synthesis=synthesis, oi=oi,
                     n_stations=n_stations, noise_sigma=noise_sigma,
                     l_values=l_values, n_values=n_values)


def config_to_dict(config: RunConfig) -> dict:
    """Canonical JSON form; load_config(config_to_dict(c)) == c."""
    cov = config.oi.cov
    if isinstance(cov.sigma2, np.ndarray):
        raise ConfigError("per-cell sigma2 cannot be written to a config file")
    l_lat, l_lon = cov.corr_len
    return {
        "master_seed": config.master_seed,
        "output_dir": config.output_dir,
        "n_steps": config.n_steps,
        "grid": {
            "n_lat": config.grid.n_lat, "n_lon": config.grid.n_lon,
            "lat0": config.grid.lat0, "lon0": config.grid.lon0,
            "d_lat": config.grid.d_lat, "d_lon": config.grid.d_lon,
            "relaxation_width": config.grid.relaxation_width,
            "ocean_fraction": config.grid.ocean_fraction,
        },
        "synthesis": {
            "n_modes": config.synthesis.n_modes,
            "amp": config.synthesis.amp,
            "base": config.synthesis.base,
            "bias_amp": config.synthesis.bias_amp,
            "bias_corr_len": config.synthesis.bias_corr_len,
        },
        "oi": {
            "sigma2": cov.sigma2,
            "corr_len": l_lat if l_lat == l_lon else [l_lat, l_lon],
            "scanning_radius": cov.scanning_radius,
            "max_influential": cov.max_influential,
            "obs_sigma2": config.oi.obs_error.obs_sigma2,
            "jitter": config.oi.jitter,
        },
        "observations": {
            "n_stations": config.n_stations,
            "noise_sigma": config.noise_sigma,
        },
        "sweep": {
            "l_values": list(config.l_values),
            "n_values": list(config.n_values),
        },
    }


def save_config(config: RunConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_grid(config: RunConfig):
    g = config.grid
    return default_osse_grid(config.master_seed, n_lat=g.n_lat, n_lon=g.n_lon,
                             ocean_fraction=g.ocean_fraction,
                             relaxation_width=g.relaxation_width,
                             lat0=g.lat0, lon0=g.lon0, d_lat=g.d_lat,
                             d_lon=g.d_lon)


def _write_report(path: str, seeds: dict, config_echo: dict,
                  forecast_rmse_mean, analysis_rmse_mean, reduction,
                  timings_ms: dict, extra: dict | None = None) -> None:
    doc = {
        "seeds": seeds,
        "config_echo": config_echo,
        "forecast_rmse_mean": forecast_rmse_mean,
        "analysis_rmse_mean": analysis_rmse_mean,
        "reduction": reduction,
        "timings_ms": timings_ms,
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_generate(config: RunConfig, out_dir: str, workers: int = 1) -> None:
    """Write nature.fsv, forecast.fsv, stations.csv, obs.csv."""
    os.makedirs(out_dir, exist_ok=True)
    grid = build_grid(config)
    nature = synthesize_nature(grid, config.n_steps, config.synthesis)
    forecast = synthesize_forecast(nature, config.synthesis)
    network = sample_stations(grid, config.n_stations,
                              derive_seed(config.master_seed, STATION_SAMPLE))
    batch = make_pseudo_obs(nature, network, config.noise_sigma,
                            derive_seed(config.master_seed, OBS_NOISE))
    write_fsv(nature, os.path.join(out_dir, "nature.fsv"))
    write_fsv(forecast, os.path.join(out_dir, "forecast.fsv"))
    write_stations_csv(network, os.path.join(out_dir, "stations.csv"))
    write_obs_csv(batch, os.path.join(out_dir, "obs.csv"))
    print("generate: wrote nature.fsv forecast.fsv stations.csv obs.csv to %s"
          % out_dir)


def cmd_assimilate(config: RunConfig, background_file: str, obs_file: str,
                   out_dir: str, workers: int = 1) -> None:
    """Assimilate an observation file into a background series and write
    analysis.fsv, increment.fsv, pa_diag.fsv, report.json."""
    os.makedirs(out_dir, exist_ok=True)
    background = read_fsv(background_file)
    batch = read_obs_csv(background.grid, obs_file)
    t0 = time.perf_counter()
    result = analyze_series(background, batch, config.oi, workers=workers)
    analyze_ms = (time.perf_counter() - t0) * 1e3
    write_fsv(result.analysis, os.path.join(out_dir, "analysis.fsv"))
    write_fsv(result.increment, os.path.join(out_dir, "increment.fsv"))
    write_fsv(FieldSeries(background.grid,
                          (Field(background.grid, result.pa_diag),),
                          ("pa_diag",)),
              os.path.join(out_dir, "pa_diag.fsv"))
    _write_report(
        os.path.join(out_dir, "report.json"),
        seeds={"master": config.master_seed},
        config_echo={
            "grid": grid_dict(background.grid),
            "oi": oi_config_dict(config.oi),
            "n_steps": background.n_steps,
            "n_stations": batch.network.n_sites,
            "obs_file_sigma2": batch.error_model.obs_sigma2,
            "obs_file_noise_seed": batch.noise_seed,
        },
        forecast_rmse_mean=None, analysis_rmse_mean=None, reduction=None,
        timings_ms={"analyze": analyze_ms})
    print("assimilate: wrote analysis.fsv increment.fsv pa_diag.fsv "
          "report.json to %s" % out_dir)


def cmd_sweep(config: RunConfig, out_dir: str, workers: int = 1) -> None:
    """Run the (L, N) sweep on the configured OSSE and write sweep.csv plus
    report.json with the per-N argmin summary."""
    os.makedirs(out_dir, exist_ok=True)
    grid = build_grid(config)
    nature = synthesize_nature(grid, config.n_steps, config.synthesis)
    forecast = synthesize_forecast(nature, config.synthesis)
    t0 = time.perf_counter()
    result = sweep(nature, forecast, config.l_values, config.n_values,
                   config.oi, seed=config.master_seed,
                   noise_sigma=config.noise_sigma, workers=workers)
    sweep_ms = (time.perf_counter() - t0) * 1e3
    write_sweep_csv(result, os.path.join(out_dir, "sweep.csv"))
    forecast_mean = skill_report(forecast, nature).domain_mean
    best = float(result.mean_rmse.min())
    _write_report(
        os.path.join(out_dir, "report.json"),
        seeds={
            "master": config.master_seed,
            "sweep_stations": derive_seed(config.master_seed, SWEEP_STATIONS),
            "sweep_noise": {str(n): derive_seed(config.master_seed,
                                                SWEEP_NOISE, n)
                            for n in sorted(set(config.n_values))},
        },
        config_echo={
            "grid": grid_dict(grid),
            "synthesis": synthesis_dict(config.synthesis),
            "oi": oi_config_dict(config.oi),
            "n_steps": config.n_steps,
            "noise_sigma": config.noise_sigma,
            "l_values": list(result.l_values),
            "n_values": list(result.n_values),
        },
        forecast_rmse_mean=forecast_mean,
        analysis_rmse_mean=best,
        reduction=(1.0 - best / forecast_mean) if forecast_mean > 0 else None,
        timings_ms={"sweep": sweep_ms},
        extra={"argmin_l": {str(n): result.argmin_l[j]
                            for j, n in enumerate(result.n_values)}})
    print("sweep: wrote sweep.csv report.json to %s" % out_dir)


def cmd_evaluate(a_file: str, b_file: str, out_dir: str) -> None:
    """Score two FSV series against each other; write rmse.fsv and print the
    evaluation-domain mean."""
    os.makedirs(out_dir, exist_ok=True)
    a = read_fsv(a_file)
    b = read_fsv(b_file)
    rmse = rmse_field(a, b)
    mean = domain_mean_rmse(rmse, a.grid)
    write_fsv(FieldSeries(a.grid, (rmse,), ("rmse",)),
              os.path.join(out_dir, "rmse.fsv"))
    print(_fmt(mean))


def _resolve_threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("OI_ASSIM_THREADS")
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError("OI_ASSIM_THREADS must be an integer, got %r"
                              % env) from None
    if value < 1:
        raise ConfigError("thread count must be at least 1")
    return value


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON run configuration (defaults apply if omitted)")
    common.add_argument("--seed", type=int, metavar="U64",
                        help="override the config's master seed")
    common.add_argument("--output", metavar="DIR",
                        help="output directory (overrides config)")
    common.add_argument("--threads", type=int, metavar="N",
                        help="parallelism hint; never changes results "
                             "(env OI_ASSIM_THREADS)")

    parser = argparse.ArgumentParser(
        prog="oi-assim",
        description="Localized optimal interpolation experiments on gridded "
                    "scalar fields")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common],
                   help="synthesize nature/forecast/stations/observations")
    p_assim = sub.add_parser("assimilate", parents=[common],
                             help="analyze a background series against an "
                                  "observation file")
    p_assim.add_argument("background", help="background FSV file")
    p_assim.add_argument("obs", help="observation CSV file")
    sub.add_parser("sweep", parents=[common],
                   help="correlation-length / station-count sweep")
    p_eval = sub.add_parser("evaluate", parents=[common],
                            help="RMSE of one FSV series against another")
    p_eval.add_argument("a", help="first FSV file")
    p_eval.add_argument("b", help="second FSV file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            config = replace(config, master_seed=args.seed,
                             synthesis=replace(config.synthesis,
                                               seed=args.seed))
        out_dir = args.output if args.output is not None else config.output_dir
        workers = _resolve_threads(args.threads)
        if args.command == "generate":
            cmd_generate(config, out_dir, workers=workers)
        elif args.command == "assimilate":
            cmd_assimilate(config, args.background, args.obs, out_dir,
                           workers=workers)
        elif args.command == "sweep":
            cmd_sweep(config, out_dir, workers=workers)
        elif args.command == "evaluate":
            cmd_evaluate(args.a, args.b, out_dir)
        return 0
    except ConfigError as exc:
        return _fail("config", exc)
    except FsvFormatError as exc:
        return _fail("format", exc)
    except FileNotFoundError as exc:
        return _fail("io", exc)
    except OSError as exc:
        return _fail("io", exc)
    except SingularSystemError as exc:
        return _fail("singular", exc)
    except ValueError as exc:
        return _fail("invalid", exc)


def _fail(category: str, exc: Exception) -> int:
    detail = " ".join(str(exc).split())
    print("error:%s: %s" % (category, detail), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
