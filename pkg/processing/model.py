"""
Hierarchical Flux Model
Data bundle of the inversion and the marginalized conditional log-densities
used by the Gibbs sampler. Beta, tau1 and the mole-fraction field are
integrated out analytically; every log-density is defined up to an additive
constant free of the block being sampled.

The truncated-Gaussian normalizers of the Box-Cox process are taken to be one,
so the flux densities are exact only when truncation has negligible mass.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .boxcox import BoxCoxParam, forward, derivatives, log_jacobian, truncation_ok
from .covariance import (
    DiscrepancyParams,
    FluxCorrParams,
    ShiftedFactor,
    build_separable,
    cholesky_lower,
    powered_exp_corr,
)
from .errors import ConditioningError, DomainError, ImproprietyError, ParameterError

logger = logging.getLogger(__name__)

# S^2 at or below this is treated as an improper conditional
S2_FLOOR = 1e-300

DISCREPANCY_COORDS = ('log_inv_tau2', 'a', 'log_d')
FLUX_PARAM_NAMES = ('theta11', 'theta12', 'lambda')

# variant id -> (fixed lambda or None when free, spatially correlated flux)
VARIANTS: Dict[int, Tuple[Optional[float], bool]] = {
    1: (None, True),
    2: (0.0, True),
    3: (1.0, True),
    4: (None, False),
    5: (0.0, False),
    6: (1.0, False),
}

VARIANT_LABELS = {
    1: 'Box-Cox, spatial',
    2: 'lognormal, spatial',
    3: 'truncated Gaussian, spatial',
    4: 'Box-Cox, independent',
    5: 'lognormal, independent',
    6: 'truncated Gaussian, independent',
}


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """
    Flux grid

    Attributes:
        cell_ids: Identifier per cell
        coords: (n1, 2) lon/lat in degrees
        weights: Integration weights (cell areas or ones)
        covariates: (n1, p) design matrix X
        covariate_names: Column labels of X
    """
    cell_ids: Tuple[str, ...]
    coords: np.ndarray
    weights: np.ndarray
    covariates: np.ndarray
    covariate_names: Tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.cell_ids)
        if len(set(self.cell_ids)) != n:
            raise ParameterError("duplicate cell ids in grid")
        coords = np.asarray(self.coords, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        if coords.shape != (n, 2) or weights.shape != (n,) or covariates.shape[0] != n:
            raise ParameterError("grid coordinates, weights and covariates must have one row per cell")
        if covariates.shape[1] < 1:
            raise ParameterError("grid needs at least one covariate")
        if not np.all(weights > 0):
            raise ParameterError("grid weights must be positive")
        if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(covariates))):
            raise ParameterError("grid coordinates and covariates must be finite")
        if np.linalg.matrix_rank(covariates) < covariates.shape[1]:
            raise ConditioningError("covariate matrix is not of full column rank")
        object.__setattr__(self, 'cell_ids', tuple(str(c) for c in self.cell_ids))
        object.__setattr__(self, 'coords', coords)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'covariates', covariates)
        if not self.covariate_names:
            names = tuple(f'x{i + 1}' for i in range(covariates.shape[1]))
            object.__setattr__(self, 'covariate_names', names)

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    def index_of(self) -> Dict[str, int]:
        return {cid: i for i, cid in enumerate(self.cell_ids)}


@dataclass(frozen=True, eq=False)
class StationSet:
    """Measurement stations with lon/lat coordinates in degrees"""
    station_ids: Tuple[str, ...]
    coords: np.ndarray

    def __post_init__(self):
        n = len(self.station_ids)
        if n < 1:
            raise ParameterError("at least one station is required")
        if len(set(self.station_ids)) != n:
            raise ParameterError("duplicate station ids")
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != (n, 2) or not np.all(np.isfinite(coords)):
            raise ParameterError("station coordinates must be finite with one (lon, lat) row per station")
        object.__setattr__(self, 'station_ids', tuple(str(s) for s in self.station_ids))
        object.__setattr__(self, 'coords', coords)

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)

    def index_of(self) -> Dict[str, int]:
        return {sid: i for i, sid in enumerate(self.station_ids)}


@dataclass(frozen=True, eq=False)
class SensitivityStack:
    """Weighted sensitivity matrices B_t (ppb per g/s), shape (T, n_s, n1)"""
    matrices: np.ndarray

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[0] < 1:
            raise ParameterError("sensitivities must be a non-empty (T, n_s, n1) array")
        if not np.all(np.isfinite(mats)):
            raise ParameterError("sensitivities must be finite")
        object.__setattr__(self, 'matrices', mats)

    @property
    def n_time(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_stations(self) -> int:
        return self.matrices.shape[1]

    @property
    def n_cells(self) -> int:
        return self.matrices.shape[2]

    def stacked(self) -> np.ndarray:
        """Time-major (T * n_s, n1) matrix"""
        return self.matrices.reshape(-1, self.n_cells)

    def apply(self, flux: np.ndarray) -> np.ndarray:
        """B_t Y1 for every t, shape (T, n_s)"""
        return self.matrices @ np.asarray(flux, dtype=float)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """
    Station readings

    Attributes:
        t_index: Zero-based time index per reading
        station_index: Station position per reading
        values: Readings Z2 (ppb); negatives are legal
        variances: Per-reading error variance (ppb^2)
        n_time: Number of time points T
        n_stations: Number of stations n_s
    """
    t_index: np.ndarray
    station_index: np.ndarray
    values: np.ndarray
    variances: np.ndarray
    n_time: int
    n_stations: int

    def __post_init__(self):
        t_index = np.asarray(self.t_index, dtype=int).ravel()
        station_index = np.asarray(self.station_index, dtype=int).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        variances = np.asarray(self.variances, dtype=float).ravel()
        n = values.size
        if not (t_index.size == station_index.size == variances.size == n):
            raise ParameterError("observation fields must have equal length")
        if not np.all(np.isfinite(values)):
            raise ParameterError("observation values must be finite")
        if not (np.all(np.isfinite(variances)) and np.all(variances > 0)):
            raise ParameterError("observation variances must be positive")
        if n and (t_index.min() < 0 or t_index.max() >= self.n_time):
            raise ParameterError("observation time index out of range")
        if n and (station_index.min() < 0 or station_index.max() >= self.n_stations):
            raise ParameterError("observation station index out of range")
        object.__setattr__(self, 't_index', t_index)
        object.__setattr__(self, 'station_index', station_index)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'variances', variances)

    @property
    def n_readings(self) -> int:
        return self.values.size

    @property
    def slots(self) -> np.ndarray:
        """Time-major slot per reading"""
        return self.t_index * self.n_stations + self.station_index

    @property
    def n_slots(self) -> int:
        return self.n_time * self.n_stations

    def precision_diag(self) -> np.ndarray:
        """Diagonal of C^T V^-1 C, zero at unobserved slots"""
        out = np.zeros(self.n_slots)
        np.add.at(out, self.slots, 1.0 / self.variances)
        return out

    def weighted_values(self) -> np.ndarray:
        """C^T V^-1 Z2"""
        out = np.zeros(self.n_slots)
        np.add.at(out, self.slots, self.values / self.variances)
        return out

    def observed_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_slots, dtype=bool)
        mask[self.slots] = True
        return mask


def _check_interval(name: str, interval: Tuple[float, float]) -> Tuple[float, float]:
    lower, upper = (float(v) for v in interval)
    if not (np.isfinite(lower) and np.isfinite(upper) and lower < upper):
        raise ParameterError(f"prior bounds for {name} must be finite with lower < upper, got {interval}")
    return lower, upper


@dataclass(frozen=True)
class PriorBounds:
    """Uniform prior ranges on the sampling coordinates"""
    log_inv_tau2: Tuple[float, float] = (-2.0, 20.0)
    a: Tuple[float, float] = (-1.0, 1.0)
    log_d: Tuple[float, float] = (float(np.log(0.1)), float(np.log(5.0)))
    theta11: Tuple[float, float] = (0.0, 2.0)
    theta12: Tuple[float, float] = (0.0, 2.0)
    lam: Tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        for name in DISCREPANCY_COORDS + FLUX_PARAM_NAMES:
            object.__setattr__(self, self._attr(name), _check_interval(name, self.interval(name)))
        if self.a[0] < -1.0 or self.a[1] > 1.0:
            raise ParameterError(f"bounds for a must lie within (-1, 1), got {self.a}")
        if self.theta11[0] < 0.0 or self.theta12[0] < 0.0 or self.theta12[1] > 2.0:
            raise ParameterError("theta11 bounds must be non-negative and theta12 bounds within (0, 2)")

    @staticmethod
    def _attr(name: str) -> str:
        return 'lam' if name == 'lambda' else name

    def interval(self, name: str) -> Tuple[float, float]:
        return getattr(self, self._attr(name))

    def arrays(self, names: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        pairs = [self.interval(n) for n in names]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def contains(self, names: Sequence[str], values: Sequence[float]) -> bool:
        lower, upper = self.arrays(names)
        values = np.asarray(values, dtype=float)
        return bool(np.all(np.isfinite(values)) and np.all(values > lower) and np.all(values < upper))


@dataclass(frozen=True)
class FluxState:
    """Flux vector Y1 (g/s), strictly positive"""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or not np.all(values > 0) or not np.all(np.isfinite(values)):
            raise DomainError("flux state must be a finite, strictly positive vector")
        object.__setattr__(self, 'values', values)


FluxLike = Union[FluxState, np.ndarray, Sequence[float]]


def _flux_values(flux: FluxLike) -> np.ndarray:
    if isinstance(flux, FluxState):
        return flux.values
    return np.asarray(flux, dtype=float)


def gls_beta(g_under: np.ndarray, x_under: np.ndarray,
             r_inv_apply: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """
    Generalised least-squares coefficients

    Args:
        g_under: Stacked transformed vector
        x_under: Stacked covariate matrix
        r_inv_apply: Maps a vector or matrix to R^-1 times it

    Returns:
        (X^T R^-1 X)^-1 X^T R^-1 G

    Raises:
        ConditioningError: If X^T R^-1 X is singular
    """
    x_under = np.asarray(x_under, dtype=float)
    if x_under.ndim == 1:
        x_under = x_under.reshape(-1, 1)
    rx = r_inv_apply(x_under)
    gram = x_under.T @ rx
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise ConditioningError("stacked covariate matrix is rank deficient")
    return scipy.linalg.solve(gram, rx.T @ np.asarray(g_under, dtype=float), assume_a='pos')


def sum_sq_residuals(g_under: np.ndarray, beta_hat: np.ndarray, x_under: np.ndarray,
                     r_inv_apply: Callable[[np.ndarray], np.ndarray]) -> float:
    """S^2 = (G - X beta)^T R^-1 (G - X beta)"""
    x_under = np.asarray(x_under, dtype=float)
    if x_under.ndim == 1:
        x_under = x_under.reshape(-1, 1)
    resid = np.asarray(g_under, dtype=float) - x_under @ np.asarray(beta_hat, dtype=float)
    return max(0.0, float(resid @ r_inv_apply(resid)))


class StackedCorrelation:
    """
    Two-block correlation bdiag(R, R) of (Y1, W1) with the GLS pieces it implies

    The correlation does not depend on lambda, so one instance serves every
    lambda at fixed theta1.
    """

    def __init__(self, corr: np.ndarray, covariates: np.ndarray):
        self.n_cells = corr.shape[0]
        self.identity = bool(np.array_equal(corr, np.eye(self.n_cells)))
        self.chol = None if self.identity else cholesky_lower(corr, 'flux correlation')
        block_logdet = 0.0 if self.identity else 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self.logdet = 2.0 * block_logdet
        self.x_under = np.vstack([covariates, covariates])
        self.rx = self.apply_inv(self.x_under)
        gram = self.x_under.T @ self.rx
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            raise ConditioningError("stacked covariate matrix is rank deficient")
        self.gram_chol = cholesky_lower(gram, 'GLS normal equations')
        self.gram_logdet = 2.0 * float(np.sum(np.log(np.diag(self.gram_chol))))

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        """R_under^-1 v for a stacked vector or matrix"""
        v = np.asarray(v, dtype=float)
        if self.identity:
            return v.copy()
        blocks = v.reshape(2, self.n_cells, -1)
        out = np.stack([scipy.linalg.cho_solve((self.chol, True), b, check_finite=False) for b in blocks])
        return out.reshape(v.shape)

    def beta(self, g_under: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve((self.gram_chol, True), self.rx.T @ g_under, check_finite=False)

    def profile(self, g_under: np.ndarray) -> Tuple[float, np.ndarray]:
        """
        Returns:
            Tuple of (S^2, Psi G) where Psi G = R^-1 (G - X beta_hat)
        """
        resid = g_under - self.x_under @ self.beta(g_under)
        psi_g = self.apply_inv(resid)
        return max(0.0, float(resid @ psi_g)), psi_g


@dataclass(frozen=True, eq=False)
class HierarchicalModel:
    """
    Everything the conditionals need: grid, stations, sensitivities,
    observations, inventory, prior bounds and the model variant
    """
    grid: SpatialGrid
    stations: StationSet
    sensitivities: SensitivityStack
    observations: ObservationSet
    inventory: np.ndarray
    bounds: PriorBounds = field(default_factory=PriorBounds)
    variant: int = 1

    def __post_init__(self):
        inventory = np.asarray(self.inventory, dtype=float)
        if inventory.shape != (self.grid.n_cells,):
            raise ParameterError("inventory must have one flux per grid cell")
        if not (np.all(np.isfinite(inventory)) and np.all(inventory > 0)):
            raise DomainError("inventory fluxes must be strictly positive")
        if self.variant not in VARIANTS:
            raise ParameterError(f"model variant must be one of 1-6, got {self.variant}")
        sens = self.sensitivities
        if sens.n_cells != self.grid.n_cells or sens.n_stations != self.stations.n_stations:
            raise ParameterError(
                f"sensitivity shape {sens.matrices.shape} does not match "
                f"{self.stations.n_stations} stations and {self.grid.n_cells} cells"
            )
        obs = self.observations
        if obs.n_time != sens.n_time or obs.n_stations != sens.n_stations:
            raise ParameterError("observations and sensitivities disagree on T or station count")
        object.__setattr__(self, 'inventory', inventory)
        object.__setattr__(self, '_stacked', sens.stacked())
        object.__setattr__(self, '_obs_precision', obs.precision_diag())
        object.__setattr__(self, '_obs_weighted', obs.weighted_values())
        object.__setattr__(self, '_independent_prior', None)

    @property
    def n_cells(self) -> int:
        return self.grid.n_cells

    @property
    def n_time(self) -> int:
        return self.sensitivities.n_time

    @property
    def stacked_sensitivities(self) -> np.ndarray:
        return self._stacked

    @property
    def obs_precision(self) -> np.ndarray:
        return self._obs_precision

    @property
    def obs_weighted(self) -> np.ndarray:
        return self._obs_weighted

    @property
    def fixed_lambda(self) -> Optional[float]:
        return VARIANTS[self.variant][0]

    @property
    def spatial(self) -> bool:
        return VARIANTS[self.variant][1]

    @property
    def free_flux_params(self) -> Tuple[str, ...]:
        names = []
        if self.spatial:
            names.extend(['theta11', 'theta12'])
        if self.fixed_lambda is None:
            names.append('lambda')
        return tuple(names)

    def discrepancy_from_coords(self, coords: Sequence[float]) -> Optional[DiscrepancyParams]:
        """Discrepancy parameters at sampling coordinates, None outside the prior bounds"""
        if not self.bounds.contains(DISCREPANCY_COORDS, coords):
            return None
        return DiscrepancyParams.from_sampling(coords)

    def flux_params_from_coords(self, coords: Sequence[float]) -> Optional[Tuple[Optional[FluxCorrParams], BoxCoxParam]]:
        """(theta1, lambda) from the free flux coordinates, None outside the prior bounds"""
        names = self.free_flux_params
        if len(coords) != len(names):
            raise ParameterError(f"expected {len(names)} flux parameters, got {len(coords)}")
        if names and not self.bounds.contains(names, coords):
            return None
        values = dict(zip(names, (float(c) for c in coords)))
        theta1 = FluxCorrParams(values['theta11'], values['theta12']) if self.spatial else None
        lam = values.get('lambda', self.fixed_lambda)
        return theta1, BoxCoxParam(lam)

    def flux_correlation(self, theta1: Optional[FluxCorrParams]) -> np.ndarray:
        if not self.spatial or theta1 is None:
            return np.eye(self.n_cells)
        return powered_exp_corr(theta1, self.grid.coords)

    def stacked_prior(self, theta1: Optional[FluxCorrParams]) -> StackedCorrelation:
        if not self.spatial or theta1 is None:
            if self._independent_prior is None:
                object.__setattr__(self, '_independent_prior',
                                   StackedCorrelation(np.eye(self.n_cells), self.grid.covariates))
            return self._independent_prior
        return StackedCorrelation(self.flux_correlation(theta1), self.grid.covariates)


class FluxConditional:
    """
    Data term of the flux conditional at fixed discrepancy parameters

    With A = C^T V^-1 C + Q, the term is -1/2 Y^T K Y + Y^T h where
    K = B^T Q B - (QB)^T A^-1 (QB) and h = (QB)^T A^-1 C^T V^-1 Z2.
    """

    def __init__(self, model: HierarchicalModel, disc: DiscrepancyParams):
        prec = build_separable(disc, model.n_time, model.stations.coords)
        factor = ShiftedFactor(prec, model.obs_precision)
        sens = model.stacked_sensitivities
        q_sens = prec.matvec(sens)
        solved = factor.solve(q_sens)
        quad = sens.T @ q_sens - q_sens.T @ solved
        self.quad = 0.5 * (quad + quad.T)
        self.linear = solved.T @ model.obs_weighted

    def log_density(self, flux: np.ndarray) -> float:
        return float(-0.5 * flux @ self.quad @ flux + flux @ self.linear)

    def gradient(self, flux: np.ndarray) -> np.ndarray:
        return -self.quad @ flux + self.linear


class FluxTarget:
    """Log-density and gradient of Y1 given everything else"""

    def __init__(self, model: HierarchicalModel, disc: DiscrepancyParams,
                 theta1: Optional[FluxCorrParams], lam: Union[float, BoxCoxParam],
                 data_term: Optional[FluxConditional] = None):
        self.model = model
        self.lam = lam if isinstance(lam, BoxCoxParam) else BoxCoxParam(float(lam))
        self.data = data_term if data_term is not None else FluxConditional(model, disc)
        self.prior = model.stacked_prior(theta1)
        self.inventory_g = forward(model.inventory, self.lam)
        self.inventory_log_jac = log_jacobian(model.inventory, self.lam)
        self.n_cells = model.n_cells

    def in_support(self, flux: np.ndarray) -> bool:
        return bool(np.all(np.isfinite(flux)) and np.all(flux > 0))

    def _profile(self, flux: np.ndarray) -> Tuple[float, np.ndarray]:
        g = forward(flux, self.lam)
        if not truncation_ok(g, self.lam):
            return np.nan, g
        s2, psi_g = self.prior.profile(np.concatenate([g, self.inventory_g]))
        if s2 <= S2_FLOOR:
            raise ImproprietyError(f"sum of squared residuals collapsed (S^2={s2:.3e})")
        return s2, psi_g

    def log_density(self, flux: FluxLike) -> float:
        flux = _flux_values(flux)
        if not self.in_support(flux):
            return -np.inf
        s2, _ = self._profile(flux)
        if np.isnan(s2):
            return -np.inf
        prior_term = -self.n_cells * np.log(0.5 * s2) + log_jacobian(flux, self.lam) + self.inventory_log_jac
        return self.data.log_density(flux) + float(prior_term)

    def gradient(self, flux: FluxLike) -> np.ndarray:
        flux = _flux_values(flux)
        if not self.in_support(flux):
            raise DomainError("flux gradient requires strictly positive fluxes")
        s2, psi_g = self._profile(flux)
        if np.isnan(s2):
            raise DomainError("flux lies outside the Box-Cox truncation region")
        first, second = derivatives(flux, self.lam)
        prior_grad = -(2.0 * self.n_cells / s2) * first * psi_g[:self.n_cells] + second / first
        return self.data.gradient(flux) + prior_grad


def log_cond_discrepancy(params: DiscrepancyParams, model: HierarchicalModel, flux: FluxLike) -> float:
    """
    ln p(tau2, a, d | Z2, Y1) in the sampling coordinates (ln 1/tau2, a, ln d)

    Returns -inf outside the prior bounds. Conditioning failures propagate.
    """
    if not model.bounds.contains(DISCREPANCY_COORDS, params.to_sampling()):
        return -np.inf
    flux = _flux_values(flux)
    prec = build_separable(params, model.n_time, model.stations.coords)
    factor = ShiftedFactor(prec, model.obs_precision)
    signal = model.stacked_sensitivities @ flux
    q_signal = prec.matvec(signal)
    combined = model.obs_weighted + q_signal
    value = (
        0.5 * prec.logdet()
        - 0.5 * factor.logdet
        - 0.5 * float(signal @ q_signal)
        + 0.5 * float(combined @ factor.solve(combined))
    )
    return float(value)


def log_cond_flux(flux: FluxLike, model: HierarchicalModel, disc: DiscrepancyParams,
                  theta1: Optional[FluxCorrParams], lam: Union[float, BoxCoxParam]) -> float:
    """ln p(Y1 | Z2, W1, tau2, theta2, theta1, lambda) up to a constant"""
    return FluxTarget(model, disc, theta1, lam).log_density(flux)


def grad_log_cond_flux(flux: FluxLike, model: HierarchicalModel, disc: DiscrepancyParams,
                       theta1: Optional[FluxCorrParams], lam: Union[float, BoxCoxParam]) -> np.ndarray:
    """Gradient of log_cond_flux with respect to Y1"""
    return FluxTarget(model, disc, theta1, lam).gradient(flux)


def log_cond_fluxparams(theta1: Optional[FluxCorrParams], lam: Union[float, BoxCoxParam],
                        flux: FluxLike, inventory: np.ndarray, model: HierarchicalModel) -> float:
    """
    ln p(theta1, lambda | Y1, W1) with beta and tau1 integrated out

    Returns -inf when a free parameter lies outside its prior bounds.
    """
    lam = lam if isinstance(lam, BoxCoxParam) else BoxCoxParam(float(lam))
    coords = []
    for name in model.free_flux_params:
        if name == 'lambda':
            coords.append(lam.value)
        elif theta1 is None:
            raise ParameterError("spatial variants need theta1")
        else:
            coords.append(getattr(theta1, name))
    if coords and not model.bounds.contains(model.free_flux_params, coords):
        return -np.inf

    flux = _flux_values(flux)
    inventory = np.asarray(inventory, dtype=float)
    if not (np.all(flux > 0) and np.all(inventory > 0)):
        return -np.inf
    g_under = np.concatenate([forward(flux, lam), forward(inventory, lam)])
    if not truncation_ok(g_under, lam):
        return -np.inf

    prior = model.stacked_prior(theta1)
    s2, _ = prior.profile(g_under)
    if s2 <= S2_FLOOR:
        raise ImproprietyError(f"sum of squared residuals collapsed (S^2={s2:.3e})")
    n_cells = flux.size
    value = (
        -0.5 * prior.logdet
        - 0.5 * prior.gram_logdet
        - n_cells * np.log(s2)
        + log_jacobian(flux, lam)
        + log_jacobian(inventory, lam)
    )
    return float(value)
