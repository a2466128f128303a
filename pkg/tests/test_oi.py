"""The OI analysis: gain, full-domain solve, localized solve, series driver."""

from __future__ import annotations

import numpy as np
import pytest

from oiassim import (
    CovarianceParams,
    Field,
    LocalizedSolver,
    ObsErrorModel,
    ObservationBatch,
    ObservationNetwork,
    OIConfig,
    SingularSystemError,
    Station,
    analyze_full,
    analyze_localized,
    analyze_series,
    apply_H,
    build_cov_matrix,
    kalman_gain,
    make_pseudo_obs,
    sample_stations,
)

from helpers import land_grid, make_series


def _network_at(grid, cells):
    sites = tuple(Station(i, *grid.cell_center(r, c))
                  for i, (r, c) in enumerate(cells))
    return ObservationNetwork(grid, sites)


def _config(sigma2=1.0, corr_len=3.0, obs_sigma2=0.25, **kw):
    return OIConfig(CovarianceParams(sigma2=sigma2, corr_len=corr_len, **kw),
                    ObsErrorModel(obs_sigma2))


def test_kalman_gain_scalar_cases():
    one = np.array([[1.0]])
    assert kalman_gain(one, one, np.array([[0.0]])) == pytest.approx(1.0)
    assert kalman_gain(one, one, one) == pytest.approx(0.5)
    tiny = kalman_gain(one, one, np.array([[1e9]]))
    assert tiny == pytest.approx(1e-9, rel=1e-6)


def test_kalman_gain_shape_checks():
    with pytest.raises(ValueError):
        kalman_gain(np.zeros((3, 2)), np.eye(3), np.eye(3))
    with pytest.raises(ValueError):
        kalman_gain(np.zeros((3, 2)), np.eye(2), np.eye(3))


def test_kalman_gain_matches_dense_formula():
    rng = np.random.default_rng(42)
    for _ in range(10):
        n, m = int(rng.integers(2, 8)), int(rng.integers(1, 5))
        a = rng.normal(size=(n, n))
        pb = a @ a.T + 0.5 * np.eye(n)
        rows = rng.integers(0, n, size=m)
        h = np.zeros((m, n))
        h[np.arange(m), rows] = 1.0
        r = np.diag(rng.uniform(0.1, 1.0, size=m))
        expect = pb @ h.T @ np.linalg.inv(h @ pb @ h.T + r)
        got = kalman_gain(pb @ h.T, h @ pb @ h.T, r)
        assert np.allclose(got, expect, rtol=0, atol=1e-10)


def test_analyze_full_zero_innovation_returns_background():
    grid = land_grid(8, 8)
    rng = np.random.default_rng(1)
    background = Field(grid, rng.normal(size=(8, 8)))
    net = _network_at(grid, [(1, 1), (4, 6), (7, 0)])
    obs = apply_H(background, net)
    out = analyze_full(background, net, obs, _config())
    assert np.array_equal(out.analysis.values, background.values)


def test_analyze_full_scalar_blue():
    grid = land_grid(1, 1)
    background = Field(grid, np.array([[10.0]]))
    net = _network_at(grid, [(0, 0)])
    out = analyze_full(background, net, [12.0], _config(sigma2=1.0,
                                                        obs_sigma2=1.0))
    # increment = 1/(1+1) * innovation = 1.0; pa = 1 - 1/2 = 0.5
    assert out.analysis.values[0, 0] == pytest.approx(11.0, abs=1e-14)
    assert out.pa_diag[0, 0] == pytest.approx(0.5, abs=1e-14)


def _dense_oracle(background, net, obs_values, config):
    """Textbook dense BLUE on the flattened grid, built from scratch."""
    grid = background.grid
    cells = [(r, c) for r in range(grid.n_lat) for c in range(grid.n_lon)]
    pb = build_cov_matrix(cells, config.cov)
    n = len(cells)
    m = net.n_sites
    h = np.zeros((m, n))
    for j, (r, c) in enumerate(net.cells):
        h[j, cells.index((r, c))] = 1.0
    r_mat = config.obs_error.r_matrix(m)
    k = pb @ h.T @ np.linalg.inv(h @ pb @ h.T + r_mat)
    innov = np.asarray(obs_values, dtype=float) - h @ background.values.ravel()
    analysis = background.values.ravel() + k @ innov
    pa = pb - k @ h @ pb
    return analysis.reshape(grid.shape), np.diag(pa).reshape(grid.shape)


def test_analyze_full_matches_independent_dense_oracle():
    grid = land_grid(6, 5)
    rng = np.random.default_rng(9)
    background = Field(grid, rng.normal(size=(6, 5)))
    net = _network_at(grid, [(0, 0), (2, 3), (3, 1), (5, 4)])
    obs = apply_H(background, net) + rng.normal(size=4)
    config = _config(sigma2=0.8, corr_len=(2.0, 3.0), obs_sigma2=0.3)

    out = analyze_full(background, net, obs, config)
    want_analysis, want_pa = _dense_oracle(background, net, obs, config)
    assert np.allclose(out.analysis.values, want_analysis, rtol=0, atol=1e-10)
    assert np.allclose(out.pa_diag, want_pa, rtol=0, atol=1e-10)


def test_localized_with_radius_covering_grid_equals_full():
    grid = land_grid(10, 10)
    rng = np.random.default_rng(17)
    background = Field(grid, rng.normal(size=(10, 10)))
    net = sample_stations(grid, 12, seed=4)
    obs = apply_H(background, net) + rng.normal(scale=0.5, size=12)
    config = _config(corr_len=3.0, scanning_radius=50.0, max_influential=12)

    local = analyze_localized(background, net, obs, config)
    full = analyze_full(background, net, obs, config)
    assert np.max(np.abs(local.analysis.values
                         - full.analysis.values)) <= 1e-8
    assert np.max(np.abs(local.pa_diag - full.pa_diag)) <= 1e-8


def test_cells_without_observations_keep_background():
    grid = land_grid(20, 20)
    rng = np.random.default_rng(3)
    background = Field(grid, rng.normal(size=(20, 20)))
    net = _network_at(grid, [(2, 2), (3, 2)])
    obs = [5.0, -2.0]
    config = _config(corr_len=1.0, scanning_radius=3.0)
    out = analyze_localized(background, net, obs, config)

    rows, cols = np.indices((20, 20))
    d2 = np.minimum((rows - 2) ** 2 + (cols - 2) ** 2,
                    (rows - 3) ** 2 + (cols - 2) ** 2)
    far = d2 > 9.0
    assert far.sum() > 300
    assert np.array_equal(out.analysis.values[far], background.values[far])
    assert not np.array_equal(out.analysis.values[~far],
                              background.values[~far])
    # untouched cells keep the background variance
    assert np.allclose(out.pa_diag[far], 1.0, rtol=0, atol=0)


def test_analysis_is_affine_equivariant():
    grid = land_grid(9, 9)
    rng = np.random.default_rng(31)
    bg = rng.normal(size=(9, 9))
    net = sample_stations(grid, 8, seed=1)
    obs = apply_H(Field(grid, bg), net) + rng.normal(size=8)
    config = _config()

    base = analyze_localized(Field(grid, bg), net, obs, config)
    scaled = analyze_localized(Field(grid, 2.5 * bg), net, 2.5 * obs, config)
    shifted = analyze_localized(Field(grid, bg + 7.0), net, obs + 7.0, config)
    assert np.allclose(scaled.analysis.values, 2.5 * base.analysis.values,
                       rtol=1e-12, atol=1e-12)
    assert np.allclose(shifted.analysis.values, base.analysis.values + 7.0,
                       rtol=1e-12, atol=1e-12)


def test_interpolation_limit_small_r():
    grid = land_grid(12, 12)
    rng = np.random.default_rng(8)
    background = Field(grid, rng.normal(size=(12, 12)))
    cells = [(2, 2), (5, 9), (8, 4), (10, 10)]
    net = _network_at(grid, cells)
    obs = rng.normal(size=4)
    config = _config(obs_sigma2=1e-12)
    out = analyze_localized(background, net, obs, config)
    for (r, c), y in zip(cells, obs):
        assert out.analysis.values[r, c] == pytest.approx(y, abs=1e-6)
        assert out.pa_diag[r, c] <= 1e-6


def test_pa_diag_never_exceeds_background_variance():
    grid = land_grid(15, 15)
    rng = np.random.default_rng(12)
    background = Field(grid, rng.normal(size=(15, 15)))
    net = sample_stations(grid, 30, seed=9)
    obs = rng.normal(size=30)

    scalar = _config(sigma2=1.3)
    out = analyze_localized(background, net, obs, scalar)
    assert (out.pa_diag <= 1.3 + 1e-10).all()
    assert (out.pa_diag >= 0.0).all()

    s2 = rng.uniform(0.2, 2.0, size=(15, 15))
    per_cell = _config(sigma2=s2)
    out = analyze_localized(background, net, obs, per_cell)
    assert (out.pa_diag <= s2 + 1e-10).all()
    assert (out.pa_diag >= 0.0).all()


def test_max_influential_caps_and_breaks_ties_by_station_id():
    grid = land_grid(7, 7)
    background = Field(grid, np.zeros((7, 7)))
    # stations at (3,2) and (3,4): both at distance 1 from cell (3,3)
    net = _network_at(grid, [(3, 2), (3, 4)])
    config = _config(corr_len=3.0, scanning_radius=6.0, max_influential=1)
    solver = LocalizedSolver(grid, net, config)
    w = solver.weights.toarray().reshape(7, 7, 2)
    assert (np.count_nonzero(w, axis=2) <= 1).all()
    assert w[3, 3, 0] > 0.0
    assert w[3, 3, 1] == 0.0
    # a looser cap uses both stations
    both = LocalizedSolver(grid, net, _config(corr_len=3.0,
                                              scanning_radius=6.0,
                                              max_influential=2))
    w2 = both.weights.toarray().reshape(7, 7, 2)
    assert w2[3, 3, 0] > 0.0 and w2[3, 3, 1] > 0.0


def test_scanning_radius_boundary_is_inclusive():
    grid = land_grid(9, 9)
    net = _network_at(grid, [(4, 4)])
    config = _config(corr_len=3.0, scanning_radius=2.0)
    w = LocalizedSolver(grid, net, config).weights.toarray().reshape(9, 9)
    assert w[4, 6] > 0.0          # distance exactly 2
    assert w[6, 4] > 0.0
    assert w[5, 6] == 0.0         # distance sqrt(5)
    assert w[4, 7] == 0.0         # distance 3


def test_solver_reuse_and_thread_equivalence():
    grid = land_grid(16, 16)
    rng = np.random.default_rng(6)
    net = sample_stations(grid, 25, seed=2)
    config = _config()
    serial = LocalizedSolver(grid, net, config, workers=1)
    threaded = LocalizedSolver(grid, net, config, workers=4)
    assert np.array_equal(serial.weights.toarray(),
                          threaded.weights.toarray())
    background = Field(grid, rng.normal(size=(16, 16)))
    obs = rng.normal(size=25)
    a = serial.apply(background, obs)
    b = threaded.apply(background, obs)
    assert np.array_equal(a.analysis.values, b.analysis.values)
    assert np.array_equal(a.pa_diag, b.pa_diag)


def test_ocean_cells_stay_nan():
    land = np.ones((10, 10), dtype=bool)
    land[0:3, 6:10] = False
    grid = land_grid(10, 10, land_mask=land)
    values = np.where(land, 1.0, np.nan)
    background = Field(grid, values)
    net = _network_at(grid, [(5, 5), (6, 6)])
    out = analyze_localized(background, net, [2.0, 0.0], _config())
    assert np.isnan(out.analysis.values[0, 7])
    assert np.isfinite(out.analysis.values[grid.land_mask]).all()


def test_jitter_is_retry_only():
    grid = land_grid(8, 8)
    rng = np.random.default_rng(14)
    background = Field(grid, rng.normal(size=(8, 8)))
    net = sample_stations(grid, 10, seed=3)
    obs = rng.normal(size=10)
    clean = analyze_localized(background, net, obs, _config())
    cfg = OIConfig(CovarianceParams(1.0, 3.0), ObsErrorModel(0.25),
                   jitter=1e-3)
    jittered = analyze_localized(background, net, obs, cfg)
    # the jitter must not touch a system whose factorization succeeds
    assert np.array_equal(clean.analysis.values, jittered.analysis.values)
    assert np.array_equal(clean.pa_diag, jittered.pa_diag)


def test_singular_system_error_names_cell_and_stations():
    grid = land_grid(5, 5)
    background = Field(grid, np.zeros((5, 5)))
    net = _network_at(grid, [(2, 2), (2, 3)])
    # sigma2 = 0 and R = 0 make the innovation system exactly singular and
    # the zero-trace fallback cannot rescue it
    config = _config(sigma2=0.0, obs_sigma2=0.0)
    with pytest.raises(SingularSystemError) as err:
        analyze_localized(background, net, [1.0, 2.0], config)
    msg = str(err.value)
    assert "station" in msg
    assert "0" in msg and "1" in msg


def test_singular_system_rescued_by_jitter():
    grid = land_grid(5, 5)
    background = Field(grid, np.zeros((5, 5)))
    net = _network_at(grid, [(2, 2), (2, 3)])
    config = OIConfig(CovarianceParams(0.0, 3.0), ObsErrorModel(0.0),
                      jitter=1e-8)
    out = analyze_localized(background, net, [1.0, 2.0], config)
    # P^B = 0 means the gain is zero: background survives unchanged
    assert np.array_equal(out.analysis.values, background.values)


def test_analyze_series_matches_per_step_calls():
    grid = land_grid(12, 12)
    rng = np.random.default_rng(25)
    background = make_series(grid, *rng.normal(size=(3, 12, 12)))
    nature = make_series(grid, *rng.normal(size=(3, 12, 12)))
    net = sample_stations(grid, 15, seed=7)
    batch = make_pseudo_obs(nature, net, noise_sigma=0.5, seed=5)
    config = _config()

    result = analyze_series(background, batch, config)
    assert result.analysis.time_labels == background.time_labels
    assert result.config_echo == config
    for k in range(3):
        single = analyze_localized(background.steps[k], net,
                                   batch.values[k], config)
        assert np.array_equal(result.analysis.steps[k].values,
                              single.analysis.values)
        assert np.array_equal(result.pa_diag, single.pa_diag)
    got_inc = result.increment.as_array()
    want_inc = result.analysis.as_array() - background.as_array()
    assert np.allclose(got_inc, want_inc, rtol=0, atol=1e-12)


def test_analyze_series_validates_alignment():
    grid = land_grid(6, 6)
    other = land_grid(6, 6, lat0=3.0)
    background = make_series(grid, np.zeros((6, 6)), np.ones((6, 6)))
    nature = make_series(other, np.zeros((6, 6)), np.ones((6, 6)))
    net = sample_stations(other, 4, seed=1)
    batch = make_pseudo_obs(nature, net, noise_sigma=0.1, seed=2)
    with pytest.raises(ValueError):
        analyze_series(background, batch, _config())

    short = make_series(grid, np.zeros((6, 6)))
    net2 = sample_stations(grid, 4, seed=1)
    batch2 = make_pseudo_obs(short, net2, noise_sigma=0.1, seed=2)
    with pytest.raises(ValueError):
        analyze_series(background, batch2, _config())


def test_analyze_series_propagates_singular_error_with_context():
    grid = land_grid(5, 5)
    background = make_series(grid, np.zeros((5, 5)),
                             labels=["2010-07"])
    net = _network_at(grid, [(2, 2), (2, 3)])
    batch = ObservationBatch(net, np.array([[1.0, 2.0]]), ("2010-07",),
                             ObsErrorModel(0.0))
    # the factorization happens once per network, so the error names the
    # offending cell and stations rather than a time step
    with pytest.raises(SingularSystemError, match="station"):
        analyze_series(background, batch, _config(sigma2=0.0,
                                                  obs_sigma2=0.0))
