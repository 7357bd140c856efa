"""
Posterior Diagnostics
Mole-fraction reconstruction from flux draws, prediction scores and
regional flux aggregates
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from processing.covariance import DiscrepancyParams, ShiftedFactor, build_separable
from processing.errors import ParameterError
from processing.model import HierarchicalModel, SpatialGrid
from processing.samplers import PosteriorSamples

logger = logging.getLogger(__name__)

# g/s -> Tg/yr
TG_PER_YEAR = 3600.0 * 24.0 * 365.25 / 1e12

INTERVAL = (0.025, 0.975)

SCORE_COLUMNS = ['model', 'flux_rmspe', 'flux_mcrps', 'mf_rmspe', 'mf_mcrps']


def molefraction_conditional(model: HierarchicalModel, flux: np.ndarray,
                             disc: DiscrepancyParams) -> Tuple[np.ndarray, ShiftedFactor]:
    """
    Gaussian conditional of Y2 given Z2, Y1 and the discrepancy parameters

    Returns:
        Tuple of (mean over all time-major slots, factor of the conditional precision
        C^T V^-1 C + Q_zeta)
    """
    prec = build_separable(disc, model.n_time, model.stations.coords)
    factor = ShiftedFactor(prec, model.obs_precision)
    signal = model.stacked_sensitivities @ np.asarray(flux, dtype=float)
    mean = factor.solve(model.obs_weighted + prec.matvec(signal))
    return mean, factor


def posterior_molefraction(samples: PosteriorSamples, model: HierarchicalModel, rng: np.random.Generator,
                           slots: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    One Y2 draw per posterior draw, at the requested time-major slots

    Returns:
        (n_draws, n_requested) array; every slot when slots is None
    """
    if samples.n_draws == 0:
        raise ParameterError("no posterior draws to reconstruct mole fractions from")
    n_slots = model.n_time * model.stations.n_stations
    idx = np.arange(n_slots) if slots is None else np.asarray(slots, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= n_slots):
        raise ParameterError("requested slot out of range")

    out = np.empty((samples.n_draws, idx.size))
    for k in range(samples.n_draws):
        mean, factor = molefraction_conditional(model, samples.flux[k], samples.discrepancy(k))
        draw = mean + factor.correlate(rng.standard_normal(n_slots))
        out[k] = draw[idx]
    logger.info(f"Reconstructed mole fractions at {idx.size} slots for {samples.n_draws} draws")
    return out


def _check_scores_input(truth: np.ndarray, predictions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=float).ravel()
    predictions = np.asarray(predictions, dtype=float)
    if predictions.ndim == 1:
        predictions = predictions.reshape(-1, 1)
    if predictions.shape[1] != truth.size:
        raise ParameterError(f"predictions cover {predictions.shape[1]} locations, truth has {truth.size}")
    return truth, predictions


def score_rmspe(truth: np.ndarray, predictions: np.ndarray) -> float:
    """Root-mean-squared error of the posterior mean over locations"""
    truth, predictions = _check_scores_input(truth, predictions)
    return float(np.sqrt(np.mean((truth - predictions.mean(axis=0)) ** 2)))


def score_mcrps(truth: np.ndarray, predictions: np.ndarray, max_draws: Optional[int] = None) -> float:
    """
    Mean over locations of the empirical CRPS

    mean|x_i - y| - (1 / 2m^2) sum_ij |x_i - x_j|, the double sum taken from
    the sorted draws. With max_draws the draws are thinned evenly first.
    """
    truth, predictions = _check_scores_input(truth, predictions)
    m = predictions.shape[0]
    if m < 2:
        raise ParameterError("CRPS needs at least two draws per location")
    if max_draws is not None and m > max_draws:
        predictions = predictions[np.linspace(0, m - 1, max_draws).round().astype(int)]
        m = max_draws
    accuracy = np.mean(np.abs(predictions - truth[None, :]), axis=0)
    ordered = np.sort(predictions, axis=0)
    ranks = 2.0 * np.arange(m) - m + 1.0
    spread = 2.0 * (ranks @ ordered)
    return float(np.mean(accuracy - spread / (2.0 * m * m)))


@dataclass(frozen=True)
class RegionMask:
    """Named subset of grid cells"""
    name: str
    cell_ids: Tuple[str, ...]

    def indices(self, cell_ids: Sequence[str]) -> np.ndarray:
        lookup = {cid: i for i, cid in enumerate(cell_ids)}
        unknown = [c for c in self.cell_ids if c not in lookup]
        if unknown:
            raise ParameterError(f"mask {self.name!r} names unknown cells: {', '.join(unknown[:5])}")
        return np.array([lookup[c] for c in self.cell_ids], dtype=int)


def whole_domain(grid: SpatialGrid) -> RegionMask:
    return RegionMask('domain', grid.cell_ids)


@dataclass
class FluxAggregate:
    """Per-draw regional totals with their median and 95% interval"""
    name: str
    unit: str
    totals: np.ndarray
    median: float
    lower: float
    upper: float


def aggregate_flux(samples: PosteriorSamples, mask: RegionMask, tg_per_year: bool = False,
                   cell_ids: Optional[Sequence[str]] = None) -> FluxAggregate:
    """
    Sum Y1 draws over a mask

    Args:
        samples: Posterior draws
        mask: Cells to sum over
        tg_per_year: Convert g/s totals to Tg/yr
        cell_ids: Column labels of samples.flux when samples carries none
    """
    labels = cell_ids if cell_ids is not None else samples.cell_ids
    totals = samples.flux[:, mask.indices(labels)].sum(axis=1)
    unit = 'g/s'
    if tg_per_year:
        totals = totals * TG_PER_YEAR
        unit = 'Tg/yr'
    lower, median, upper = np.quantile(totals, [INTERVAL[0], 0.5, INTERVAL[1]])
    return FluxAggregate(mask.name, unit, totals, float(median), float(lower), float(upper))


def summarize_flux(samples: PosteriorSamples, truth: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Per-cell posterior median and 95% interval"""
    lower, median, upper = np.quantile(samples.flux, [INTERVAL[0], 0.5, INTERVAL[1]], axis=0)
    summary = pd.DataFrame({
        'cell_id': list(samples.cell_ids),
        'median': median,
        'lower': lower,
        'upper': upper,
    })
    if truth is not None:
        summary['truth'] = np.asarray(truth, dtype=float)
    return summary


def aggregate_table(samples: PosteriorSamples, masks: Sequence[RegionMask],
                    truth: Optional[np.ndarray] = None, tg_per_year: bool = True) -> pd.DataFrame:
    """One row per mask: mask_name, unit, median, lower, upper, truth"""
    rows = []
    for mask in masks:
        agg = aggregate_flux(samples, mask, tg_per_year=tg_per_year)
        true_total = np.nan
        if truth is not None:
            true_total = float(np.asarray(truth)[mask.indices(samples.cell_ids)].sum())
            if tg_per_year:
                true_total *= TG_PER_YEAR
        rows.append({
            'mask_name': agg.name,
            'unit': agg.unit,
            'median': agg.median,
            'lower': agg.lower,
            'upper': agg.upper,
            'truth': true_total,
        })
    return pd.DataFrame(rows, columns=['mask_name', 'unit', 'median', 'lower', 'upper', 'truth'])


def score_row(model_id: str, flux_truth: np.ndarray, flux_draws: np.ndarray,
              mf_truth: Optional[np.ndarray] = None, mf_draws: Optional[np.ndarray] = None,
              max_draws: Optional[int] = None) -> Dict[str, object]:
    """Flux and mole-fraction scores of one fitted model"""
    row = {
        'model': model_id,
        'flux_rmspe': score_rmspe(flux_truth, flux_draws),
        'flux_mcrps': score_mcrps(flux_truth, flux_draws, max_draws),
        'mf_rmspe': np.nan,
        'mf_mcrps': np.nan,
    }
    if mf_truth is not None and mf_draws is not None and np.size(mf_truth):
        row['mf_rmspe'] = score_rmspe(mf_truth, mf_draws)
        row['mf_mcrps'] = score_mcrps(mf_truth, mf_draws, max_draws)
    logger.info(f"Scores for {model_id}: flux RMSPE {row['flux_rmspe']:.4g}, MCRPS {row['flux_mcrps']:.4g}")
    return row
