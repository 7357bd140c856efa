"""
OSSE Simulator
Synthetic grids, stations and sensitivities, forward simulation of station
readings from a known flux, inventory manipulation and Box-Cox flux fields
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from processing.boxcox import BoxCoxParam, inverse, truncation_ok
from processing.covariance import (
    DiscrepancyParams,
    FluxCorrParams,
    cholesky_lower,
    powered_exp_corr,
    simulate_discrepancy,
)
from processing.errors import DomainError, ParameterError, SimulationError
from processing.model import ObservationSet, SensitivityStack, SpatialGrid, StationSet

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

BOXCOX_MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class PlumeParams:
    """
    Shape of the synthetic footprints

    Attributes:
        signal_ppb: Typical mole-fraction signal of a typical flux
        wind_mean_deg: Mean direction the wind blows from (0 = north, 90 = east)
        wind_ar: AR(1) coefficient of the wind direction between time steps
        wind_sd_deg: Marginal standard deviation of the wind direction
        plume_length: e-folding distance of the footprint upwind (degrees)
        plume_width: Lateral spread at the station (degrees)
        plume_spread: Growth of the lateral spread per degree upwind
        near_field: Relative weight of the isotropic near-station term
    """
    signal_ppb: float = 50.0
    wind_mean_deg: float = 240.0
    wind_ar: float = 0.9
    wind_sd_deg: float = 40.0
    plume_length: float = 3.0
    plume_width: float = 0.5
    plume_spread: float = 0.3
    near_field: float = 0.5

    def __post_init__(self):
        if not (-1.0 < self.wind_ar < 1.0):
            raise ParameterError(f"wind_ar must satisfy |wind_ar| < 1, got {self.wind_ar}")
        for name in ('signal_ppb', 'plume_length', 'plume_width'):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.wind_sd_deg < 0 or self.plume_spread < 0 or self.near_field < 0:
            raise ParameterError("wind_sd_deg, plume_spread and near_field must be non-negative")


@dataclass
class OsseConfig:
    """
    Settings of one observing-system simulation experiment

    Attributes:
        discrepancy: True (tau2, a, d)
        variance: Observation error variance (ppb^2)
        truth_source: 'inventory' to read the truth, 'boxcox' to simulate it
        truth_path: Flux file when truth_source is 'inventory'
        tau1, beta, theta11, theta12, lam, spatial: Box-Cox truth settings
        missing_fraction: Fraction of slots missing at random per station
        missing_slots: Explicit missing slots, overriding missing_fraction
        holdout_fraction: Fraction of remaining slots withheld for validation
    """
    discrepancy: DiscrepancyParams = field(default_factory=lambda: DiscrepancyParams(0.01, 0.9, 2.5))
    variance: float = 1.0
    truth_source: str = 'boxcox'
    truth_path: Optional[str] = None
    tau1: float = 1.0
    beta: Tuple[float, ...] = (1.0,)
    theta11: float = 0.8
    theta12: float = 1.7
    lam: float = 0.0
    spatial: bool = True
    missing_fraction: float = 0.1
    missing_slots: Optional[Tuple[int, ...]] = None
    holdout_fraction: float = 0.0

    def __post_init__(self):
        if self.truth_source not in ('inventory', 'boxcox'):
            raise ParameterError(f"truth source must be 'inventory' or 'boxcox', got {self.truth_source!r}")
        if self.truth_source == 'inventory' and not self.truth_path:
            raise ParameterError("an inventory truth needs truth_path")
        if not self.variance > 0:
            raise ParameterError("observation variance must be positive")
        for name in ('missing_fraction', 'holdout_fraction'):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ParameterError(f"{name} must lie in [0, 1)")


def synth_grid(nx: int, ny: int, lon0: float, lat0: float, dlon: float, dlat: float,
               split_lat: Optional[float] = None) -> SpatialGrid:
    """
    Regular lon/lat grid with area weights proportional to cos(lat)

    With split_lat the covariates are two indicators, north and south of it;
    otherwise a single intercept column.
    """
    if nx < 1 or ny < 1 or dlon <= 0 or dlat <= 0:
        raise ParameterError("grid needs nx, ny >= 1 and positive spacing")
    lon = lon0 + dlon * (np.arange(nx) + 0.5)
    lat = lat0 + dlat * (np.arange(ny) + 0.5)
    lon_grid, lat_grid = np.meshgrid(lon, lat)
    coords = np.column_stack([lon_grid.ravel(), lat_grid.ravel()])
    weights = np.cos(np.radians(coords[:, 1])) * dlon * dlat
    if split_lat is not None:
        north = (coords[:, 1] > split_lat).astype(float)
        if north.all() or not north.any():
            raise ParameterError(f"split_lat {split_lat} does not split the grid")
        covariates = np.column_stack([north, 1.0 - north])
    else:
        covariates = np.ones((coords.shape[0], 1))
    cell_ids = tuple(f'c{i:04d}' for i in range(coords.shape[0]))
    return SpatialGrid(cell_ids, coords, weights, covariates)


def synth_stations(grid: SpatialGrid, count: int, rng: np.random.Generator) -> StationSet:
    """Stations at random positions within the central part of the grid's extent"""
    if count < 1:
        raise ParameterError("at least one station is required")
    lo = grid.coords.min(axis=0)
    hi = grid.coords.max(axis=0)
    margin = 0.2 * (hi - lo)
    coords = rng.uniform(lo + margin, hi - margin, size=(count, 2))
    return StationSet(tuple(f's{i + 1}' for i in range(count)), coords)


def _wind_directions(n_time: int, plume: PlumeParams, rng: np.random.Generator) -> np.ndarray:
    wind = np.empty(n_time)
    innov = plume.wind_sd_deg * rng.standard_normal(n_time)
    wind[0] = plume.wind_mean_deg + innov[0]
    scale = np.sqrt(1.0 - plume.wind_ar ** 2)
    for t in range(1, n_time):
        wind[t] = plume.wind_mean_deg + plume.wind_ar * (wind[t - 1] - plume.wind_mean_deg) + scale * innov[t]
    return np.radians(wind)


def synth_sensitivities(grid: SpatialGrid, stations: StationSet, n_time: int, rng: np.random.Generator,
                        plume: Optional[PlumeParams] = None,
                        typical_flux: float = 1.0) -> SensitivityStack:
    """
    Gaussian-plume footprints upwind of each station

    The raw footprints are weighted by the grid weights and scaled so that a
    uniform flux of typical_flux produces signal_ppb on average.
    """
    plume = plume or PlumeParams()
    if n_time < 1:
        raise ParameterError("need at least one time step")
    if not typical_flux > 0:
        raise ParameterError("typical flux must be positive")

    directions = _wind_directions(n_time, plume, rng)
    offsets = grid.coords[None, :, :] - stations.coords[:, None, :]
    raw = np.empty((n_time, stations.n_stations, grid.n_cells))
    for t, theta in enumerate(directions):
        upwind = np.array([np.sin(theta), np.cos(theta)])
        across = np.array([np.cos(theta), -np.sin(theta)])
        x = offsets @ upwind
        y = offsets @ across
        x_pos = np.maximum(x, 0.0)
        width = plume.plume_width + plume.plume_spread * x_pos
        plume_term = np.exp(-x_pos / plume.plume_length - 0.5 * (y / width) ** 2) / width
        near = plume.near_field * np.exp(-0.5 * (x ** 2 + y ** 2) / plume.plume_width ** 2) / plume.plume_width
        raw[t] = np.where(x >= 0.0, plume_term, near)
    raw *= grid.weights[None, None, :]

    mean_row_sum = raw.sum(axis=2).mean()
    if not mean_row_sum > 0:
        raise SimulationError("synthetic footprints vanish on this grid")
    scale = plume.signal_ppb / (typical_flux * mean_row_sum)
    logger.info(f"Synthesized sensitivities: T={n_time}, {stations.n_stations} stations, {grid.n_cells} cells")
    return SensitivityStack(raw * scale)


def missing_slots_at_random(n_time: int, n_stations: int, fraction: float,
                            rng: np.random.Generator) -> np.ndarray:
    """Time-major slots dropped independently per station with the given probability"""
    if not 0.0 <= fraction < 1.0:
        raise ParameterError("missing fraction must lie in [0, 1)")
    drop = rng.uniform(size=(n_time, n_stations)) < fraction
    return np.flatnonzero(drop.ravel())


def simulate_observations(flux_true: np.ndarray, stack: SensitivityStack, disc: DiscrepancyParams,
                          stations: StationSet, variance: Union[float, np.ndarray],
                          rng: np.random.Generator,
                          missing: Optional[Iterable[int]] = None,
                          missing_fraction: float = 0.0) -> Tuple[ObservationSet, np.ndarray]:
    """
    Y2_t = B_t Y1 + zeta_t and Z2 = C Y2 + eps

    Args:
        flux_true: True flux Y1
        stack: Sensitivities
        disc: True discrepancy parameters
        stations: Station set, for the spatial correlation of the discrepancy
        variance: Error variance, scalar or one per time-major slot
        rng: Random stream
        missing: Explicit time-major slots to drop; overrides missing_fraction
        missing_fraction: Per-station probability of a missing slot

    Returns:
        Tuple of (observations, Y2 field of shape (T, n_s))
    """
    flux_true = np.asarray(flux_true, dtype=float)
    if not np.all(flux_true > 0):
        raise DomainError("true flux must be strictly positive")
    n_time, n_stations = stack.n_time, stack.n_stations
    n_slots = n_time * n_stations

    signal = stack.apply(flux_true)
    zeta = simulate_discrepancy(disc, n_time, stations.coords, rng)
    field_true = signal + zeta

    variances = np.broadcast_to(np.asarray(variance, dtype=float), (n_slots,)).copy()
    if not np.all(variances > 0):
        raise ParameterError("observation variance must be positive")
    readings = field_true.ravel() + np.sqrt(variances) * rng.standard_normal(n_slots)

    if missing is not None:
        dropped = np.unique(np.asarray(list(missing), dtype=int))
        if dropped.size and (dropped.min() < 0 or dropped.max() >= n_slots):
            raise ParameterError("missing slot out of range")
    else:
        dropped = missing_slots_at_random(n_time, n_stations, missing_fraction, rng)
    keep = np.setdiff1d(np.arange(n_slots), dropped)
    logger.info(f"Simulated {keep.size} readings ({dropped.size} of {n_slots} slots missing)")

    obs = ObservationSet(
        t_index=keep // n_stations,
        station_index=keep % n_stations,
        values=readings[keep],
        variances=variances[keep],
        n_time=n_time,
        n_stations=n_stations,
    )
    return obs, field_true


def hold_out(obs: ObservationSet, fraction: float,
             rng: np.random.Generator) -> Tuple[ObservationSet, np.ndarray]:
    """
    Withhold a random fraction of readings as validation slots

    Returns:
        Tuple of (remaining observations, held-out time-major slots)
    """
    if not 0.0 <= fraction < 1.0:
        raise ParameterError("holdout fraction must lie in [0, 1)")
    n_out = int(round(fraction * obs.n_readings))
    if n_out == 0:
        return obs, np.zeros(0, dtype=int)
    chosen = np.sort(rng.choice(obs.n_readings, size=n_out, replace=False))
    keep = np.setdiff1d(np.arange(obs.n_readings), chosen)
    remaining = ObservationSet(
        obs.t_index[keep], obs.station_index[keep], obs.values[keep], obs.variances[keep],
        obs.n_time, obs.n_stations,
    )
    return remaining, np.sort(obs.slots[chosen])


def scale_inventory(inventory: np.ndarray, target_mean: float, target_variance: float) -> np.ndarray:
    """
    Affine map a W + b matching a target sample mean and variance (ddof = 1)

    Raises:
        SimulationError: If a mapped flux is not positive
    """
    inventory = np.asarray(inventory, dtype=float)
    if not np.all(inventory > 0):
        raise DomainError("inventory fluxes must be strictly positive")
    if not target_variance > 0:
        raise ParameterError("target variance must be positive")
    current_var = inventory.var(ddof=1)
    if not current_var > 0:
        raise ParameterError("inventory has zero variance and cannot be rescaled")
    slope = np.sqrt(target_variance / current_var)
    shift = target_mean - slope * inventory.mean()
    scaled = slope * inventory + shift
    if not np.all(scaled > 0):
        raise SimulationError(
            f"rescaled inventory has non-positive fluxes (slope {slope:.4g}, shift {shift:.4g})"
        )
    return scaled


def simulate_boxcox_field(grid: SpatialGrid, theta1: Optional[FluxCorrParams], tau1: float,
                          beta: Sequence[float], lam: Union[float, BoxCoxParam],
                          rng: np.random.Generator,
                          max_attempts: int = BOXCOX_MAX_ATTEMPTS) -> np.ndarray:
    """
    Draw a flux field from the Box-Cox spatial model by rejection on truncation

    Args:
        grid: Grid with covariates X
        theta1: Correlation parameters, or None for independent cells
        tau1: Precision of the transformed field
        beta: Regression coefficients, one per covariate
        lam: Box-Cox parameter
        rng: Random stream
        max_attempts: Redraws allowed before giving up

    Raises:
        SimulationError: If every draw violates the truncation
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (grid.covariates.shape[1],):
        raise ParameterError(f"need {grid.covariates.shape[1]} beta values, got {beta.size}")
    if not tau1 > 0:
        raise ParameterError("tau1 must be positive")
    mean = grid.covariates @ beta
    if theta1 is None:
        chol = np.eye(grid.n_cells)
    else:
        chol = cholesky_lower(powered_exp_corr(theta1, grid.coords), 'flux correlation')
    for attempt in range(1, max_attempts + 1):
        g = mean + chol @ rng.standard_normal(grid.n_cells) / np.sqrt(tau1)
        if truncation_ok(g, lam):
            if attempt > 1:
                logger.debug(f"Box-Cox field accepted after {attempt} draws")
            return inverse(g, lam)
    raise SimulationError(f"no draw inside the Box-Cox truncation region after {max_attempts} attempts")


@dataclass
class OsseOutputs:
    """Everything an experiment writes"""
    truth_flux: np.ndarray
    observations: ObservationSet
    molefraction: np.ndarray
    holdout_slots: np.ndarray


class OsseSimulator:
    """Runs one experiment from an OsseConfig"""

    def __init__(self, config: OsseConfig):
        self.config = config

    def true_flux(self, grid: SpatialGrid, rng: np.random.Generator,
                  inventory: Optional[np.ndarray] = None) -> np.ndarray:
        cfg = self.config
        if cfg.truth_source == 'inventory':
            if inventory is None:
                raise ParameterError("inventory truth requested but no inventory supplied")
            return np.asarray(inventory, dtype=float)
        theta1 = FluxCorrParams(cfg.theta11, cfg.theta12) if cfg.spatial else None
        return simulate_boxcox_field(grid, theta1, cfg.tau1, cfg.beta, cfg.lam, rng)

    def simulate(self, truth: np.ndarray, stations: StationSet, stack: SensitivityStack,
                 rng: np.random.Generator) -> OsseOutputs:
        cfg = self.config
        obs, molefraction = simulate_observations(
            truth, stack, cfg.discrepancy, stations, cfg.variance, rng,
            missing=cfg.missing_slots, missing_fraction=cfg.missing_fraction,
        )
        obs, holdout = hold_out(obs, cfg.holdout_fraction, rng)
        logger.info(
            f"OSSE: total true flux {truth.sum():.4g} g/s, {obs.n_readings} readings, "
            f"{holdout.size} held out"
        )
        return OsseOutputs(truth, obs, molefraction, holdout)
