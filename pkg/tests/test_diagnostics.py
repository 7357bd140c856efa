"""
Tests for posterior diagnostics
Mole-fraction reconstruction against a dense Gaussian conditional, RMSPE and
CRPS scores, and regional flux aggregation
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from outputs.diagnostics import (
    TG_PER_YEAR, RegionMask, aggregate_flux, aggregate_table, molefraction_conditional,
    posterior_molefraction, score_mcrps, score_rmspe, score_row, summarize_flux, whole_domain
)
from processing.covariance import DiscrepancyParams, build_separable
from processing.errors import ParameterError
from processing.model import (
    HierarchicalModel, ObservationSet, PriorBounds, SensitivityStack, SpatialGrid, StationSet
)
from processing.samplers import PosteriorSamples


def _model(n_time=4, n_stations=2, n_cells=3, observed=None, variance=1.0, seed=0):
    rng = np.random.default_rng(seed)
    grid = SpatialGrid(tuple(f'c{i}' for i in range(n_cells)), rng.uniform(size=(n_cells, 2)),
                       np.ones(n_cells), np.ones((n_cells, 1)))
    stations = StationSet(tuple(f's{i}' for i in range(n_stations)), rng.uniform(0, 3, size=(n_stations, 2)))
    sens = SensitivityStack(rng.uniform(size=(n_time, n_stations, n_cells)))
    slots = np.arange(n_time * n_stations) if observed is None else np.asarray(observed, dtype=int)
    values = rng.normal(loc=2.0, size=slots.size)
    obs = ObservationSet(slots // n_stations, slots % n_stations, values, np.full(slots.size, variance),
                         n_time, n_stations)
    return HierarchicalModel(grid, stations, sens, obs, np.ones(n_cells), PriorBounds(), 1)


def _samples(flux, disc, n_draws, cell_ids):
    flux = np.tile(np.asarray(flux, dtype=float), (n_draws, 1))
    params = {'tau2': np.full(n_draws, disc.tau2), 'a': np.full(n_draws, disc.a), 'd': np.full(n_draws, disc.d)}
    return PosteriorSamples(flux, params, np.zeros(n_draws, dtype=int), np.arange(1, n_draws + 1),
                            cell_ids=tuple(cell_ids))


def test_conditional_matches_dense_oracle():
    model = _model(observed=[0, 2, 3, 6])
    flux = np.array([0.5, 1.5, 1.0])
    disc = DiscrepancyParams(0.3, 0.8, 1.5)
    mean, factor = molefraction_conditional(model, flux, disc)

    sigma = build_separable(disc, model.n_time, model.stations.coords).covariance_dense()
    prior_mean = model.stacked_sensitivities @ flux
    obs = model.observations
    c = np.zeros((obs.n_readings, sigma.shape[0]))
    c[np.arange(obs.n_readings), obs.slots] = 1.0
    gain = sigma @ c.T @ np.linalg.inv(c @ sigma @ c.T + np.diag(obs.variances))
    dense_mean = prior_mean + gain @ (obs.values - c @ prior_mean)
    dense_cov = sigma - gain @ c @ sigma
    np.testing.assert_allclose(mean, dense_mean, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(factor.to_dense_inverse(), dense_cov, rtol=1e-8, atol=1e-8)


def test_exact_data_limit():
    model = _model(observed=[1, 4], variance=1e-10)
    disc = DiscrepancyParams(0.1, 0.5, 1.0)
    samples = _samples([1.0, 1.0, 1.0], disc, 200, model.grid.cell_ids)
    draws = posterior_molefraction(samples, model, np.random.default_rng(1), slots=[1, 4, 5])
    assert draws.shape == (200, 3)
    assert np.all(draws[:, :2].std(axis=0) < 1e-3)
    np.testing.assert_allclose(draws[:, :2].mean(axis=0), model.observations.values, atol=1e-3)
    assert draws[:, 2].std() > 0.1


def test_unobserved_model_reproduces_prior():
    model = _model(observed=[])
    flux = np.array([1.0, 2.0, 0.5])
    disc = DiscrepancyParams(0.5, 0.6, 2.0)
    samples = _samples(flux, disc, 4000, model.grid.cell_ids)
    draws = posterior_molefraction(samples, model, np.random.default_rng(2))
    prior_mean = model.stacked_sensitivities @ flux
    prior_var = np.diag(build_separable(disc, model.n_time, model.stations.coords).covariance_dense())
    se = np.sqrt(prior_var / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - prior_mean) < 4 * se)
    np.testing.assert_allclose(draws.var(axis=0), prior_var, rtol=0.1)


def test_posterior_molefraction_errors():
    model = _model()
    disc = DiscrepancyParams(0.5, 0.6, 2.0)
    with pytest.raises(ParameterError):
        posterior_molefraction(_samples(np.ones(3), disc, 0, model.grid.cell_ids), model, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        posterior_molefraction(_samples(np.ones(3), disc, 2, model.grid.cell_ids), model,
                               np.random.default_rng(0), slots=[8])


def test_rmspe():
    truth = np.array([1.0, 2.0, 3.0])
    assert score_rmspe(truth, np.tile(truth, (5, 1))) == 0.0
    assert score_rmspe(truth, np.tile(truth + 0.7, (5, 1))) == pytest.approx(0.7)
    draws = np.array([[1.0, 2.0, 4.0], [3.0, 2.0, 2.0]])
    assert score_rmspe(truth, draws) == pytest.approx(np.sqrt(1.0 / 3.0))
    with pytest.raises(ParameterError):
        score_rmspe(truth, np.ones((4, 2)))


def test_mcrps_point_mass_and_brute_force():
    truth = np.array([0.5, -1.0])
    assert score_mcrps(truth, np.tile(truth, (10, 1))) == pytest.approx(0.0, abs=1e-15)
    draws = np.random.default_rng(3).normal(size=(50, 2))
    brute = []
    for j in range(2):
        x = draws[:, j]
        brute.append(np.mean(np.abs(x - truth[j])) - np.abs(x[:, None] - x[None, :]).sum() / (2 * x.size ** 2))
    assert score_mcrps(truth, draws) == pytest.approx(np.mean(brute), rel=1e-12)
    mae = np.mean(np.abs(draws - truth[None, :]))
    assert score_mcrps(truth, draws) <= mae
    with pytest.raises(ParameterError):
        score_mcrps(truth, draws[:1])


def test_mcrps_gaussian_closed_form():
    draws = np.random.default_rng(4).standard_normal((100_000, 1))
    expected = (np.sqrt(2.0) - 1.0) / np.sqrt(np.pi)
    assert score_mcrps(np.zeros(1), draws) == pytest.approx(expected, abs=0.005)
    assert score_mcrps(np.zeros(1), draws, max_draws=4000) == pytest.approx(expected, abs=0.05)


def test_mcrps_prefers_true_distribution():
    rng = np.random.default_rng(5)
    wins = 0
    for _ in range(50):
        truth = rng.standard_normal(20)
        honest = rng.standard_normal((200, 20))
        overdispersed = 3.0 * rng.standard_normal((200, 20))
        wins += score_mcrps(truth, honest) < score_mcrps(truth, overdispersed)
    assert wins > 40


def test_aggregate_single_cell_and_additivity():
    rng = np.random.default_rng(6)
    flux = rng.uniform(1.0, 2.0, size=(100, 4))
    samples = PosteriorSamples(flux, {}, np.zeros(100, dtype=int), np.arange(100),
                               cell_ids=('a', 'b', 'c', 'd'))
    single = aggregate_flux(samples, RegionMask('one', ('c',)))
    np.testing.assert_array_equal(single.totals, flux[:, 2])
    west = aggregate_flux(samples, RegionMask('west', ('a', 'b')))
    east = aggregate_flux(samples, RegionMask('east', ('c', 'd')))
    domain = aggregate_flux(samples, RegionMask('domain', ('a', 'b', 'c', 'd')))
    np.testing.assert_allclose(west.totals + east.totals, domain.totals, rtol=1e-14)
    assert domain.lower <= domain.median <= domain.upper
    converted = aggregate_flux(samples, RegionMask('domain', ('a', 'b', 'c', 'd')), tg_per_year=True)
    assert converted.unit == 'Tg/yr'
    np.testing.assert_allclose(converted.totals, domain.totals * 3600 * 24 * 365.25 / 1e12, rtol=1e-14)
    with pytest.raises(ParameterError):
        aggregate_flux(samples, RegionMask('bad', ('z',)))


def test_tables():
    model = _model()
    flux = np.array([[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 4.0, 5.0]])
    samples = PosteriorSamples(flux, {}, np.zeros(3, dtype=int), np.arange(3), cell_ids=model.grid.cell_ids)
    summary = summarize_flux(samples, truth=np.array([2.0, 3.0, 4.0]))
    assert list(summary.columns) == ['cell_id', 'median', 'lower', 'upper', 'truth']
    np.testing.assert_allclose(summary['median'], [2.0, 3.0, 4.0])
    table = aggregate_table(samples, [whole_domain(model.grid)], truth=np.array([2.0, 3.0, 4.0]))
    assert table.loc[0, 'mask_name'] == 'domain'
    assert table.loc[0, 'truth'] == pytest.approx(9.0 * TG_PER_YEAR)
    row = score_row('variant1', np.array([2.0, 3.0, 4.0]), flux)
    assert row['flux_rmspe'] == 0.0
    assert np.isnan(row['mf_rmspe'])


def run_all_tests():
    """Run every test in this module without pytest"""
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith('test_') and callable(obj)]
    print("\n" + "=" * 80)
    print("DIAGNOSTICS TESTS")
    print("=" * 80)
    for test in tests:
        test()
        print(f"✓ {test.__name__}")
    print(f"\n{len(tests)} tests passed")


if __name__ == "__main__":
    run_all_tests()
