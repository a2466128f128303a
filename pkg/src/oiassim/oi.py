"""Optimal interpolation analysis: dense reference and localized solver.

Both solvers compute the linear minimum-variance (BLUE) update

    analysis = background + K (obs - H background)

with gain K = B_co (B_oo + R)^-1, where B_co holds background covariances
between grid cells and observation cells, B_oo between pairs of observation
cells, and R is the observation error covariance.  The matching analysis
error variance is diag(B) - diag(K B_co^T), clamped at zero against
rounding.

``analyze_full`` solves the single dense system with every observation for
every grid cell and serves as the brute-force reference.  ``LocalizedSolver``
instead solves one small system per grid cell, restricted to the stations
within the scanning radius (capped at the ``max_influential`` nearest, ties
broken by ascending station id), and caches all cell weights in one sparse
matrix, so a fixed (grid, network, config) triple can sweep a whole time
series at the cost of a sparse matvec per step.

Cells with no station in range keep their background values and their full
background error variance.  Solves never form explicit inverses; a failed
factorization gets one retry with a diagonal bump (the configured jitter,
or 1e-10 * trace by default) before raising ``SingularSystemError``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial import cKDTree

from .covariance import CovarianceParams, ObsErrorModel, cross_cov
from .grid import Field, FieldSeries, GridSpec
from .obsnet import ObservationBatch, ObservationNetwork, apply_H

__all__ = ["OIConfig", "StepAnalysis", "AnalysisResult",
           "SingularSystemError", "LocalizedSolver", "kalman_gain",
           "analyze_full", "analyze_localized", "analyze_series"]


class SingularSystemError(RuntimeError):
    """An observation system matrix could not be factorized, even after a
    diagonal bump."""


@dataclass(frozen=True)
class OIConfig:
    """Analysis configuration: covariance model, R model, and numerics.

    ``jitter`` is added to the diagonal of (H P^B H^T + R) only when its
    factorization fails; left at 0, the retry uses 1e-10 * trace instead.
    """

    cov: CovarianceParams
    obs_error: ObsErrorModel
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if not (isinstance(self.jitter, (int, float))
                and math.isfinite(self.jitter) and self.jitter >= 0):
            raise ValueError("jitter must be finite and non-negative")


class StepAnalysis(NamedTuple):
    """One analyzed step: the field and the per-cell analysis error
    variance."""

    analysis: Field
    pa_diag: np.ndarray


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    """A full analyzed series.

    ``increment`` is analysis minus background per step.  ``pa_diag`` is the
    per-cell analysis error variance of the (time-invariant) configuration,
    shared by all steps.  ``config_echo`` records the configuration used.
    """

    analysis: FieldSeries
    increment: FieldSeries
    pa_diag: np.ndarray
    config_echo: OIConfig

    def __post_init__(self) -> None:
        if self.increment.grid != self.analysis.grid:
            raise ValueError("analysis and increment are on different grids")
        if self.increment.n_steps != self.analysis.n_steps:
            raise ValueError("analysis and increment step counts differ")
        pa = np.asarray(self.pa_diag, dtype=np.float64).copy()
        if pa.shape != self.analysis.grid.shape:
            raise ValueError("pa_diag shape %s does not match grid %s"
                             % (pa.shape, self.analysis.grid.shape))
        pa.setflags(write=False)
        object.__setattr__(self, "pa_diag", pa)


def _solve_spd(S: np.ndarray, rhs: np.ndarray, jitter: float,
               describe: str) -> np.ndarray:
    """Solve S x = rhs for symmetric positive definite S via Cholesky.

    On a failed factorization, retries once with ``jitter`` (or, when that
    is 0, 1e-10 * trace(S)) added to the diagonal; a second failure raises
    :class:`SingularSystemError` naming the system.
    """
    try:
        c = cho_factor(S, lower=True, check_finite=False)
        return cho_solve(c, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    bump = jitter if jitter > 0 else 1e-10 * float(np.trace(S))
    try:
        c = cho_factor(S + bump * np.eye(S.shape[0]), lower=True,
                       check_finite=False)
        return cho_solve(c, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularSystemError(
            "observation system is singular even with diagonal bump %g (%s)"
            % (bump, describe)) from None


def kalman_gain(pb_ho: np.ndarray, h_pb_ht: np.ndarray, r: np.ndarray,
                jitter: float = 0.0) -> np.ndarray:
    """Gain K = pb_ho (h_pb_ht + r)^-1 via an SPD factorization.

    Args:
        pb_ho: (n_cells, n_obs) background covariance, cells vs obs cells.
        h_pb_ht: (n_obs, n_obs) background covariance among obs cells.
        r: (n_obs, n_obs) observation error covariance.
        jitter: diagonal bump used only if the factorization fails.
    """
    pb_ho = np.atleast_2d(np.asarray(pb_ho, dtype=np.float64))
    S = np.atleast_2d(np.asarray(h_pb_ht, dtype=np.float64)) \
        + np.atleast_2d(np.asarray(r, dtype=np.float64))
    if S.shape[0] != S.shape[1] or pb_ho.shape[1] != S.shape[0]:
        raise ValueError("shape mismatch: pb_ho %s vs system %s"
                         % (pb_ho.shape, S.shape))
    return _solve_spd(S, pb_ho.T.copy(), jitter,
                      "all %d observations" % S.shape[0]).T


def _check_obs_values(network: ObservationNetwork, obs_values) -> np.ndarray:
    obs = np.asarray(obs_values, dtype=np.float64)
    if obs.shape != (network.n_sites,):
        raise ValueError("expected %d observation values, got shape %s"
                         % (network.n_sites, obs.shape))
    if not np.all(np.isfinite(obs)):
        raise ValueError("observation values must be finite")
    return obs


def _check_sigma2_shape(cov: CovarianceParams, grid: GridSpec) -> None:
    if isinstance(cov.sigma2, np.ndarray) and cov.sigma2.shape != grid.shape:
        raise ValueError("per-cell sigma2 shape %s does not match grid %s"
                         % (cov.sigma2.shape, grid.shape))


def analyze_full(background: Field, network: ObservationNetwork, obs_values,
                 config: OIConfig) -> StepAnalysis:
    """Dense reference analysis: every observation updates every cell.

    Cost grows with n_cells * n_obs + n_obs**3, so this is for small grids
    and for validating the localized solver.
    """
    grid = background.grid
    if network.grid != grid:
        raise ValueError("network and background are on different grids")
    _check_sigma2_shape(config.cov, grid)
    obs = _check_obs_values(network, obs_values)
    cov = config.cov

    scells = network.cells
    rows, cols = np.indices(grid.shape)
    all_points = np.column_stack([rows.ravel(), cols.ravel()])

    S = cross_cov(cov, scells, scells)
    S[np.diag_indices_from(S)] += config.obs_error.obs_sigma2
    B = cross_cov(cov, all_points, scells)

    innov = obs - apply_H(background, network)
    ids = network.station_ids
    sol = _solve_spd(S, np.column_stack([innov, B.T.copy()]), config.jitter,
                     "all %d stations, ids %d..%d"
                     % (len(ids), ids.min(), ids.max()))
    weights = sol[:, 0]
    sinv_bt = sol[:, 1:]

    values = background.values + (B @ weights).reshape(grid.shape)
    pa = np.maximum(cov.sigma2_at(all_points)
                    - np.einsum("ij,ji->i", B, sinv_bt), 0.0)
    pa = pa.reshape(grid.shape)
    pa.setflags(write=False)
    return StepAnalysis(Field(grid, values), pa)


class LocalizedSolver:
    """Per-cell localized analysis with precomputed weights.

    Construction selects each cell's influential stations, solves the local
    systems (one factorization per distinct station subset), and stores all
    cell weights in a CSR matrix of shape (n_cells, n_sites).  ``apply`` is
    then background + W @ innovation, so one solver can process any number
    of steps that share the (grid, network, config) triple.

    ``workers`` only parallelizes the station search; it never changes the
    result.
    """

    def __init__(self, grid: GridSpec, network: ObservationNetwork,
                 config: OIConfig, workers: int = 1) -> None:
        if network.grid != grid:
            raise ValueError("network and grid do not match")
        _check_sigma2_shape(config.cov, grid)
        self.grid = grid
        self.network = network
        self.config = config

        cov = config.cov
        r = float(cov.scanning_radius)
        r2 = r * r
        cap = cov.max_influential

        scells = network.cells.astype(np.int64)
        grows, gcols = np.indices(grid.shape)
        grows = grows.ravel()
        gcols = gcols.ravel()

        tree = cKDTree(scells.astype(np.float64))
        # Slightly inflated query radius; membership is then decided exactly
        # on integer squared distances so boundary stations are never lost
        # to rounding.
        query_r = r + 1e-9 * max(1.0, r)
        cand_lists = tree.query_ball_point(
            np.column_stack([grows, gcols]).astype(np.float64), query_r,
            workers=max(1, int(workers)))

        # Group cells sharing the same station subset: one factorization
        # serves every member cell.
        groups: dict[bytes, tuple[np.ndarray, list[int]]] = {}
        for i in range(grid.n_cells):
            cand = np.sort(np.asarray(cand_lists[i], dtype=np.intp))
            if cand.size == 0:
                continue
            drow = scells[cand, 0] - grows[i]
            dcol = scells[cand, 1] - gcols[i]
            d2 = drow * drow + dcol * dcol
            keep = d2 <= r2
            cand = cand[keep]
            if cand.size == 0:
                continue
            if cand.size > cap:
                # Nearest first; ties by station id.  Ids ascend with site
                # position, so position doubles as the id key.
                order = np.lexsort((cand, d2[keep]))
                cand = np.sort(cand[order[:cap]])
            key = cand.tobytes()
            if key not in groups:
                groups[key] = (cand, [])
            groups[key][1].append(i)

        pa_flat = cov.sigma2_at(np.column_stack([grows, gcols])).copy()

        rows_parts: list[np.ndarray] = []
        cols_parts: list[np.ndarray] = []
        data_parts: list[np.ndarray] = []
        ids = network.station_ids
        for sel, members in groups.values():
            m = sel.size
            mem = np.asarray(members, dtype=np.intp)
            spoints = scells[sel]
            S = cross_cov(cov, spoints, spoints)
            S[np.diag_indices_from(S)] += config.obs_error.obs_sigma2
            cell_points = np.column_stack([grows[mem], gcols[mem]])
            B = cross_cov(cov, cell_points, spoints)
            describe = ("cell (%d, %d), station ids %s"
                        % (grows[mem[0]], gcols[mem[0]],
                           [int(v) for v in ids[sel]]))
            W = _solve_spd(S, B.T.copy(), config.jitter, describe).T
            pa_flat[mem] = np.maximum(
                pa_flat[mem] - np.einsum("ij,ij->i", B, W), 0.0)
            rows_parts.append(np.repeat(mem, m))
            cols_parts.append(np.tile(sel, mem.size))
            data_parts.append(W.ravel())

        if rows_parts:
            wrows = np.concatenate(rows_parts)
            wcols = np.concatenate(cols_parts)
            data = np.concatenate(data_parts)
        else:
            wrows = wcols = np.empty(0, dtype=np.intp)
            data = np.empty(0, dtype=np.float64)
        self._weights = scipy.sparse.csr_matrix(
            (data, (wrows, wcols)), shape=(grid.n_cells, network.n_sites))
        pa = pa_flat.reshape(grid.shape)
        pa.setflags(write=False)
        self.pa_diag = pa

    @property
    def weights(self) -> scipy.sparse.csr_matrix:
        """(n_cells, n_sites) gain weights; unreached cells are empty rows."""
        return self._weights

    def apply(self, background: Field, obs_values) -> StepAnalysis:
        """Analyze one step.  Cells without observations keep background."""
        if background.grid != self.grid:
            raise ValueError("background is on a different grid")
        obs = _check_obs_values(self.network, obs_values)
        innov = obs - apply_H(background, self.network)
        values = background.values.ravel() + self._weights @ innov
        return StepAnalysis(
            Field(self.grid, values.reshape(self.grid.shape)), self.pa_diag)


def analyze_localized(background: Field, network: ObservationNetwork,
                      obs_values, config: OIConfig,
                      workers: int = 1) -> StepAnalysis:
    """One-step localized analysis (builds a throwaway solver)."""
    solver = LocalizedSolver(background.grid, network, config, workers=workers)
    return solver.apply(background, obs_values)


def analyze_series(background: FieldSeries, obs: ObservationBatch,
                   config: OIConfig, workers: int = 1) -> AnalysisResult:
    """Analyze every step of a series against per-step observations.

    Steps are independent (no cycling): each analysis starts from that
    step's own background, never from an earlier analysis.  The solve uses
    ``config.obs_error``; the batch's own error model is provenance of how
    the values were generated, not an override.
    """
    if obs.network.grid != background.grid:
        raise ValueError("observations and background are on different grids")
    if obs.n_steps != background.n_steps:
        raise ValueError("background has %d steps, observations %d"
                         % (background.n_steps, obs.n_steps))
    if obs.time_labels != background.time_labels:
        raise ValueError("observation and background time labels differ")
    solver = LocalizedSolver(background.grid, obs.network, config,
                             workers=workers)
    fields = []
    increments = []
    for t, fld in enumerate(background.steps):
        try:
            step = solver.apply(fld, obs.values[t])
        except (ValueError, SingularSystemError) as exc:
            raise type(exc)("step %s: %s" % (background.time_labels[t], exc)
                            ) from None
        fields.append(step.analysis)
        increments.append(Field(background.grid,
                                step.analysis.values - fld.values))
    analysis = FieldSeries(background.grid, tuple(fields),
                           background.time_labels)
    increment = FieldSeries(background.grid, tuple(increments),
                            background.time_labels)
    return AnalysisResult(analysis, increment, solver.pa_diag, config)
