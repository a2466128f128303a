"""Background and observation error covariance models.

Background errors use a separable Gaussian correlation in grid-index space:
the covariance between cells a and b is

    sigma_a * sigma_b * exp(-(drow/corr_len_lat)**2 - (dcol/corr_len_lon)**2)

with per-axis index distances and per-axis correlation lengths in grid
units.  With scalar sigma2 this is the classic homogeneous form
sigma2 * exp(-sum d**2/L**2); a per-cell sigma2 field gives the separable
inhomogeneous variant (which stays positive semi-definite).

Localization knobs live here too: ``scanning_radius`` bounds how far an
observation can reach, and ``max_influential`` caps how many observations a
single grid cell may use.

Observation errors are uncorrelated with one shared variance, so R is a
scaled identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import FieldSeries

__all__ = ["CovarianceParams", "ObsErrorModel", "background_cov",
           "build_cov_matrix", "estimate_background_variance"]


def _as_scalar(name: str, v, minimum_exclusive: bool) -> float:
    ok = isinstance(v, (int, float)) and math.isfinite(v)
    if ok:
        ok = v > 0 if minimum_exclusive else v >= 0
    if not ok:
        raise ValueError("%s must be a finite %s number, got %r"
                         % (name, "positive" if minimum_exclusive
                            else "non-negative", v))
    return float(v)


@dataclass(frozen=True, eq=False)
class CovarianceParams:
    """Background covariance model plus localization knobs.

    Attributes:
        sigma2: background error variance (Kelvin^2); a scalar, or a
            per-cell array with the grid's shape.
        corr_len: correlation length in grid units; a scalar (isotropic) or
            a (lat, lon) pair; stored as a pair.
        scanning_radius: localization radius in grid units.  Defaults to
            3 * max(corr_len): beyond three correlation lengths the Gaussian
            weight is below e**-9.
        max_influential: cap on observations used per grid cell (default 20).
    """

    sigma2: float | np.ndarray
    corr_len: float | tuple[float, float]
    scanning_radius: float | None = None
    max_influential: int = 20

    def __post_init__(self) -> None:
        s2 = self.sigma2
        if isinstance(s2, np.ndarray):
            s2 = np.asarray(s2, dtype=np.float64).copy()
            if s2.ndim != 2:
                raise ValueError("per-cell sigma2 must be a 2-d field")
            if not np.all(np.isfinite(s2)) or np.any(s2 < 0):
                raise ValueError("per-cell sigma2 must be finite and >= 0")
            s2.setflags(write=False)
        else:
            s2 = _as_scalar("sigma2", s2, minimum_exclusive=False)
        object.__setattr__(self, "sigma2", s2)

        cl = self.corr_len
        if isinstance(cl, (tuple, list)):
            if len(cl) != 2:
                raise ValueError("corr_len pair must have exactly 2 entries")
            cl = (_as_scalar("corr_len[0]", cl[0], True),
                  _as_scalar("corr_len[1]", cl[1], True))
        else:
            v = _as_scalar("corr_len", cl, True)
            cl = (v, v)
        object.__setattr__(self, "corr_len", cl)

        r = self.scanning_radius
        if r is None:
            r = 3.0 * max(cl)
        else:
            r = _as_scalar("scanning_radius", r, True)
        object.__setattr__(self, "scanning_radius", r)

        if not (isinstance(self.max_influential, int)
                and self.max_influential >= 1):
            raise ValueError("max_influential must be an integer >= 1")

    def sigma2_at(self, points: np.ndarray) -> np.ndarray:
        """Local variance at (n, 2) index positions, as an (n,) array."""
        points = np.asarray(points, dtype=np.intp).reshape(-1, 2)
        if isinstance(self.sigma2, np.ndarray):
            return self.sigma2[points[:, 0], points[:, 1]]
        return np.full(points.shape[0], self.sigma2)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CovarianceParams):
            return NotImplemented
        if isinstance(self.sigma2, np.ndarray) != isinstance(other.sigma2,
                                                             np.ndarray):
            return False
        s2_equal = (np.array_equal(self.sigma2, other.sigma2)
                    if isinstance(self.sigma2, np.ndarray)
                    else self.sigma2 == other.sigma2)
        return (s2_equal and self.corr_len == other.corr_len
                and self.scanning_radius == other.scanning_radius
                and self.max_influential == other.max_influential)

    def __hash__(self) -> int:
        s2 = self.sigma2
        key = s2.tobytes() if isinstance(s2, np.ndarray) else s2
        return hash((key, self.corr_len, self.scanning_radius,
                     self.max_influential))


@dataclass(frozen=True)
class ObsErrorModel:
    """Uncorrelated observation errors with common variance ``obs_sigma2``;
    R is ``obs_sigma2`` times the identity."""

    obs_sigma2: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "obs_sigma2",
            _as_scalar("obs_sigma2", self.obs_sigma2, minimum_exclusive=False))

    def r_matrix(self, n_obs: int) -> np.ndarray:
        return self.obs_sigma2 * np.eye(n_obs)


def cross_cov(params: CovarianceParams, points_a: np.ndarray,
              points_b: np.ndarray) -> np.ndarray:
    """Pairwise background covariance between two sets of (row, col) index
    positions; returns an (na, nb) matrix."""
    pa = np.asarray(points_a, dtype=np.float64).reshape(-1, 2)
    pb = np.asarray(points_b, dtype=np.float64).reshape(-1, 2)
    l_lat, l_lon = params.corr_len
    drow = (pa[:, 0, None] - pb[None, :, 0]) / l_lat
    dcol = (pa[:, 1, None] - pb[None, :, 1]) / l_lon
    corr = np.exp(-(drow * drow) - (dcol * dcol))
    if isinstance(params.sigma2, np.ndarray):
        sa = np.sqrt(params.sigma2_at(points_a))
        sb = np.sqrt(params.sigma2_at(points_b))
        return sa[:, None] * sb[None, :] * corr
    return params.sigma2 * corr


def background_cov(a: tuple[int, int], b: tuple[int, int],
                   params: CovarianceParams) -> float:
    """Background error covariance between the cells at ``a`` and ``b``."""
    return float(cross_cov(params, np.array([a]), np.array([b]))[0, 0])


def build_cov_matrix(points, params: CovarianceParams) -> np.ndarray:
    """Symmetric background covariance matrix over a list of (row, col)
    positions; the diagonal equals the local sigma2."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("points must be non-empty")
    return cross_cov(params, pts, pts)


def estimate_background_variance(nature: FieldSeries,
                                 forecast: FieldSeries) -> np.ndarray:
    """Per-cell time-mean of (forecast - nature)**2, divisor = step count.

    The result can be passed as a per-cell ``sigma2``.
    """
    if forecast.grid != nature.grid:
        raise ValueError("nature and forecast are on different grids")
    if forecast.n_steps != nature.n_steps:
        raise ValueError("nature has %d steps, forecast %d"
                         % (nature.n_steps, forecast.n_steps))
    diff = forecast.as_array() - nature.as_array()
    return np.mean(diff * diff, axis=0)
