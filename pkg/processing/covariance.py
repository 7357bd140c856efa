"""
Covariance and Precision Constructors
Spatial correlation functions, AR(1) temporal precision and the separable
space-time precision of the mole-fraction discrepancy, with a block-tridiagonal
factorization for the shifted systems that appear in the conditionals
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.spatial.distance import cdist

from .errors import ConditioningError, ParameterError

logger = logging.getLogger(__name__)

CHOLESKY_JITTER = 1e-10

Locations = Union[np.ndarray, Sequence[Sequence[float]]]


@dataclass(frozen=True)
class FluxCorrParams:
    """Powered-exponential correlation parameters of the transformed flux field"""
    theta11: float
    theta12: float

    def __post_init__(self):
        if not (np.isfinite(self.theta11) and self.theta11 > 0):
            raise ParameterError(f"theta11 must be positive, got {self.theta11}")
        if not (0.0 < self.theta12 < 2.0):
            raise ParameterError(f"theta12 must lie in (0, 2), got {self.theta12}")


@dataclass(frozen=True)
class DiscrepancyParams:
    """
    Discrepancy parameters

    Attributes:
        tau2: Marginal precision of the discrepancy (ppb^-2)
        a: AR(1) coefficient
        d: e-folding length of the spatial correlation (degrees)
    """
    tau2: float
    a: float
    d: float

    def __post_init__(self):
        if not (np.isfinite(self.tau2) and self.tau2 > 0):
            raise ParameterError(f"tau2 must be positive, got {self.tau2}")
        if not (-1.0 < self.a < 1.0):
            raise ParameterError(f"AR coefficient a must satisfy |a| < 1, got {self.a}")
        if not (np.isfinite(self.d) and self.d > 0):
            raise ParameterError(f"length scale d must be positive, got {self.d}")

    @classmethod
    def from_sampling(cls, coords: Sequence[float]) -> 'DiscrepancyParams':
        """Build from the sampling coordinates (ln 1/tau2, a, ln d)"""
        log_inv_tau2, a, log_d = (float(c) for c in coords)
        return cls(tau2=float(np.exp(-log_inv_tau2)), a=a, d=float(np.exp(log_d)))

    def to_sampling(self) -> np.ndarray:
        return np.array([-np.log(self.tau2), self.a, np.log(self.d)])


def _as_locations(locations: Locations) -> np.ndarray:
    locs = np.asarray(locations, dtype=float)
    if locs.ndim == 1:
        locs = locs.reshape(-1, 1)
    return locs


def pairwise_distances(locations: Locations) -> np.ndarray:
    """Euclidean distances in coordinate units (degrees on a lon-lat grid)"""
    locs = _as_locations(locations)
    return cdist(locs, locs)


def powered_exp_corr(params: FluxCorrParams, locations: Locations) -> np.ndarray:
    """exp(-theta11 * |u1 - u2|^theta12) over all location pairs"""
    dist = pairwise_distances(locations)
    return np.exp(-params.theta11 * np.power(dist, params.theta12))


def exponential_corr(d: float, locations: Locations) -> np.ndarray:
    """exp(-|s1 - s2| / d) over all location pairs"""
    if not (np.isfinite(d) and d > 0):
        raise ParameterError(f"length scale d must be positive, got {d}")
    return np.exp(-pairwise_distances(locations) / d)


def cholesky_lower(matrix: np.ndarray, what: str = 'matrix') -> np.ndarray:
    """
    Lower Cholesky factor, retrying once with a small diagonal jitter

    Raises:
        ConditioningError: If the jittered matrix is still not positive-definite
    """
    try:
        factor = np.linalg.cholesky(matrix)
        if np.all(np.isfinite(factor)):
            return factor
    except np.linalg.LinAlgError:
        pass
    logger.debug(f"Cholesky of {what} failed, retrying with jitter {CHOLESKY_JITTER}")
    try:
        factor = np.linalg.cholesky(matrix + CHOLESKY_JITTER * np.eye(matrix.shape[0]))
        if np.all(np.isfinite(factor)):
            return factor
    except np.linalg.LinAlgError:
        pass
    raise ConditioningError(f"Cholesky factorization of {what} failed")


def _ar1_bands(a: float, n_time: int) -> Tuple[np.ndarray, np.ndarray]:
    if not (-1.0 < a < 1.0):
        raise ParameterError(f"AR coefficient a must satisfy |a| < 1, got {a}")
    if n_time < 1:
        raise ParameterError(f"number of time points must be at least 1, got {n_time}")
    if n_time == 1:
        return np.ones(1), np.zeros(0)
    scale = 1.0 / (1.0 - a * a)
    diag = np.full(n_time, 1.0 + a * a)
    diag[0] = diag[-1] = 1.0
    off = np.full(n_time - 1, -a)
    return diag * scale, off * scale


def ar1_precision(a: float, n_time: int) -> scipy.sparse.csr_matrix:
    """
    Precision matrix of a unit-marginal-variance AR(1) process

    Args:
        a: AR coefficient, |a| < 1
        n_time: Number of time points T

    Returns:
        Symmetric tridiagonal T x T sparse matrix
    """
    diag, off = _ar1_bands(a, n_time)
    if n_time == 1:
        return scipy.sparse.identity(1, format='csr')
    return scipy.sparse.diags([off, diag, off], [-1, 0, 1], format='csr')


class SeparablePrecision:
    """
    Q_zeta = tau2 * (Q_t kron R_s^-1), held as factors

    Vectors are ordered time-major: entry t * n_s + s.
    """

    def __init__(self, tau2: float, a: float, n_time: int, spatial_corr: np.ndarray):
        self.tau2 = float(tau2)
        self.a = float(a)
        self.n_time = int(n_time)
        self.q_diag, self.q_off = _ar1_bands(self.a, self.n_time)
        self.spatial_corr = np.asarray(spatial_corr, dtype=float)
        self.spatial_chol = cholesky_lower(self.spatial_corr, 'station correlation')
        n_space = self.spatial_corr.shape[0]
        inv = scipy.linalg.cho_solve((self.spatial_chol, True), np.eye(n_space))
        self.spatial_inv = 0.5 * (inv + inv.T)
        self.spatial_logdet = 2.0 * float(np.sum(np.log(np.diag(self.spatial_chol))))

    @property
    def n_space(self) -> int:
        return self.spatial_corr.shape[0]

    @property
    def size(self) -> int:
        return self.n_time * self.n_space

    def logdet(self) -> float:
        """ln|Q_zeta| from the Kronecker identity"""
        logdet_qt = -(self.n_time - 1) * np.log1p(-self.a * self.a)
        return float(
            self.size * np.log(self.tau2)
            + self.n_space * logdet_qt
            - self.n_time * self.spatial_logdet
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Q_zeta x for a vector or a matrix of column vectors"""
        x = np.asarray(x, dtype=float)
        blocks = x.reshape(self.n_time, self.n_space, -1)
        out = self.q_diag[:, None, None] * blocks
        if self.n_time > 1:
            out[:-1] += self.q_off[:, None, None] * blocks[1:]
            out[1:] += self.q_off[:, None, None] * blocks[:-1]
        out = np.einsum('ij,tjk->tik', self.spatial_inv, out)
        return (self.tau2 * out).reshape(x.shape)

    def quadform(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.matvec(x))

    def diagonal_block(self, t: int) -> np.ndarray:
        return self.tau2 * self.q_diag[t] * self.spatial_inv

    def lower_block(self, t: int) -> np.ndarray:
        """Block (t, t-1) of Q_zeta, t >= 1"""
        return self.tau2 * self.q_off[t - 1] * self.spatial_inv

    def to_dense(self) -> np.ndarray:
        q_t = ar1_precision(self.a, self.n_time).toarray()
        return self.tau2 * np.kron(q_t, self.spatial_inv)

    def covariance_dense(self) -> np.ndarray:
        """(1/tau2) (Q_t)^-1 kron R_s, with (Q_t)^-1 = a^|t - t'|"""
        lags = np.abs(np.subtract.outer(np.arange(self.n_time), np.arange(self.n_time)))
        return np.kron(np.power(self.a, lags), self.spatial_corr) / self.tau2


def build_separable(params: DiscrepancyParams, n_time: int, locations: Locations) -> SeparablePrecision:
    """Separable discrepancy precision for T time points at the given stations"""
    spatial = exponential_corr(params.d, locations)
    return SeparablePrecision(params.tau2, params.a, n_time, spatial)


class ShiftedFactor:
    """
    Block-bidiagonal Cholesky factor of Q_zeta + diag(shift)

    With blocks of size n_s the factor has diagonal blocks L_t and
    sub-diagonal blocks C_t; factorization costs O(T n_s^3).
    """

    def __init__(self, prec: SeparablePrecision, diag_shift: Optional[np.ndarray] = None):
        n_time, n_space = prec.n_time, prec.n_space
        if diag_shift is None:
            shift = np.zeros((n_time, n_space))
        else:
            shift = np.asarray(diag_shift, dtype=float).reshape(n_time, n_space)
            if np.any(shift < 0) or not np.all(np.isfinite(shift)):
                raise ParameterError("diagonal shift must be finite and non-negative")
        self.n_time = n_time
        self.n_space = n_space
        self.diag_blocks = np.empty((n_time, n_space, n_space))
        self.sub_blocks = np.zeros((n_time, n_space, n_space))
        for t in range(n_time):
            block = prec.diagonal_block(t) + np.diag(shift[t])
            if t > 0:
                coupling = scipy.linalg.solve_triangular(
                    self.diag_blocks[t - 1], prec.lower_block(t), lower=True, check_finite=False
                ).T
                self.sub_blocks[t] = coupling
                block = block - coupling @ coupling.T
            self.diag_blocks[t] = cholesky_lower(0.5 * (block + block.T), f'shifted precision block {t}')
        self.logdet = 2.0 * float(np.sum(np.log(np.diagonal(self.diag_blocks, axis1=1, axis2=2))))

    def _forward(self, rhs: np.ndarray) -> np.ndarray:
        out = np.empty_like(rhs)
        for t in range(self.n_time):
            b = rhs[t]
            if t > 0:
                b = b - self.sub_blocks[t] @ out[t - 1]
            out[t] = scipy.linalg.solve_triangular(self.diag_blocks[t], b, lower=True, check_finite=False)
        return out

    def _backward(self, rhs: np.ndarray) -> np.ndarray:
        out = np.empty_like(rhs)
        for t in range(self.n_time - 1, -1, -1):
            b = rhs[t]
            if t < self.n_time - 1:
                b = b - self.sub_blocks[t + 1].T @ out[t + 1]
            out[t] = scipy.linalg.solve_triangular(
                self.diag_blocks[t], b, lower=True, trans='T', check_finite=False
            )
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(Q_zeta + S)^-1 rhs for a vector or a matrix of column vectors"""
        rhs = np.asarray(rhs, dtype=float)
        blocks = rhs.reshape(self.n_time, self.n_space, -1)
        return self._backward(self._forward(blocks)).reshape(rhs.shape)

    def correlate(self, noise: np.ndarray) -> np.ndarray:
        """Map standard-normal noise to a draw with covariance (Q_zeta + S)^-1"""
        noise = np.asarray(noise, dtype=float)
        blocks = noise.reshape(self.n_time, self.n_space, -1)
        return self._backward(blocks).reshape(noise.shape)

    def to_dense_inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.n_time * self.n_space))


def solve_shifted(prec: SeparablePrecision, diag_shift: np.ndarray,
                  rhs: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Solve (Q_zeta + diag_shift) x = rhs

    Returns:
        Tuple of (solution, ln|Q_zeta + diag_shift|)
    """
    factor = ShiftedFactor(prec, diag_shift)
    return factor.solve(rhs), factor.logdet


def simulate_discrepancy(params: DiscrepancyParams, n_time: int, locations: Locations,
                         rng: np.random.Generator,
                         n_replicates: Optional[int] = None) -> np.ndarray:
    """
    Draw discrepancies through the AR(1) recursion

    zeta_1 ~ N(0, R_s / tau2) and zeta_t = a zeta_{t-1} + e_t with
    e_t ~ N(0, (1 - a^2) R_s / tau2).

    Returns:
        Array of shape (T, n_s), or (n_replicates, T, n_s)
    """
    spatial = exponential_corr(params.d, locations)
    chol = cholesky_lower(spatial, 'station correlation')
    n_space = spatial.shape[0]
    reps = 1 if n_replicates is None else int(n_replicates)
    innovations = rng.standard_normal((reps, n_time, n_space)) @ chol.T
    out = np.empty_like(innovations)
    scale = 1.0 / np.sqrt(params.tau2)
    out[:, 0] = scale * innovations[:, 0]
    step = scale * np.sqrt(1.0 - params.a ** 2)
    for t in range(1, n_time):
        out[:, t] = params.a * out[:, t - 1] + step * innovations[:, t]
    return out[0] if n_replicates is None else out
