"""
Spatial Cumulants
Lognormal auto-cumulants of the flux field, their propagation to mole
fraction through a discretized interaction kernel, Monte-Carlo estimators
for checking them, and a worked one-dimensional example
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.stats import norm

from .covariance import FluxCorrParams, powered_exp_corr
from .errors import ParameterError

logger = logging.getLogger(__name__)

# Dense rank-3 arrays grow as n^3
DENSE_GRID_WARN = 200


@dataclass(frozen=True)
class Kernel1D:
    """
    Interaction function b(s, u) evaluated on a grid

    Attributes:
        values: Matrix with rows indexed by s and columns by u
        du: Grid spacing of u
        s_points: Coordinates of the rows
        u_points: Coordinates of the columns
    """
    values: np.ndarray
    du: float
    s_points: Optional[np.ndarray] = None
    u_points: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.ndim(self.values) != 2:
            raise ParameterError("kernel values must be a matrix")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("kernel values must be finite")
        if not (np.isfinite(self.du) and self.du > 0):
            raise ParameterError(f"grid spacing must be positive, got {self.du}")

    @property
    def weights(self) -> np.ndarray:
        """Riemann-sum weights B = b * du"""
        return np.asarray(self.values, dtype=float) * self.du


@dataclass(frozen=True)
class LognormalFieldSpec:
    """Log-scale mean and covariance of a lognormal field on a grid"""
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ParameterError("mean must be a vector and cov a matching square matrix")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ParameterError("log-scale covariance must be symmetric")
        eig_min = float(np.linalg.eigvalsh(cov).min()) if mean.size else 0.0
        if eig_min < -1e-10 * max(1.0, float(np.abs(cov).max())):
            raise ParameterError(f"log-scale covariance is not positive-semidefinite (min eigenvalue {eig_min:.3e})")


def lognormal_cumulants(spec: LognormalFieldSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    First three joint cumulants of a lognormal field

    Returns:
        Tuple of (kappa1, kappa2, kappa3) with shapes (n,), (n, n), (n, n, n)
    """
    mean = np.asarray(spec.mean, dtype=float)
    cov = np.asarray(spec.cov, dtype=float)
    n = mean.size
    if n > DENSE_GRID_WARN:
        logger.warning(f"Third-order cumulant array on {n} points needs {8 * n ** 3 / 1e6:.0f} MB")

    kappa1 = np.exp(mean + 0.5 * np.diag(cov))
    e = np.exp(cov)
    kappa2 = np.outer(kappa1, kappa1) * np.expm1(cov)

    e_ij = e[:, :, None]
    e_ik = e[:, None, :]
    e_jk = e[None, :, :]
    outer3 = kappa1[:, None, None] * kappa1[None, :, None] * kappa1[None, None, :]
    kappa3 = outer3 * (e_ij * e_ik * e_jk - e_ij - e_ik - e_jk + 2.0)
    return kappa1, kappa2, kappa3


def propagate_cumulant2(kappa2_y1: np.ndarray, kernel: Kernel1D,
                        kappa2_zeta: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Second-order cumulants of Y2 = B Y1 + zeta

    Returns:
        Tuple of (k2_22, k2_12): the auto-covariance of Y2 and the cross
        covariance of Y1 with Y2 (rows u, columns s)
    """
    weights = kernel.weights
    kappa2_y1 = np.asarray(kappa2_y1, dtype=float)
    if kappa2_y1.shape != (weights.shape[1], weights.shape[1]):
        raise ParameterError(
            f"flux cumulant shape {kappa2_y1.shape} does not match kernel with {weights.shape[1]} columns"
        )
    k2_12 = kappa2_y1 @ weights.T
    k2_22 = weights @ k2_12
    if kappa2_zeta is not None:
        kappa2_zeta = np.asarray(kappa2_zeta, dtype=float)
        if kappa2_zeta.shape != k2_22.shape:
            raise ParameterError(
                f"discrepancy cumulant shape {kappa2_zeta.shape} does not match {k2_22.shape}"
            )
        k2_22 = k2_22 + kappa2_zeta
    return k2_22, k2_12


def propagate_cumulant3(kappa3_y1: np.ndarray, kernel: Kernel1D,
                        s_index: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Third-order cumulants of Y2 = B Y1 + zeta

    The Gaussian discrepancy has no third-order cumulant, so only Y1 enters.

    Args:
        kappa3_y1: Third-order cumulant array of Y1
        kernel: Discretized interaction function
        s_index: Row of the kernel at which the cross-cumulant is sliced

    Returns:
        Tuple of (k3_222, k3_112_slice), the full auto-cumulant of Y2 and the
        cross-cumulant kappa3(Y1(u1), Y1(u2), Y2(s)) at the chosen s
    """
    weights = kernel.weights
    kappa3_y1 = np.asarray(kappa3_y1, dtype=float)
    n_u = weights.shape[1]
    if kappa3_y1.shape != (n_u, n_u, n_u):
        raise ParameterError(f"flux cumulant shape {kappa3_y1.shape} does not match kernel with {n_u} columns")
    if not 0 <= s_index < weights.shape[0]:
        raise ParameterError(f"kernel row {s_index} out of range")

    k3_112_slice = np.tensordot(kappa3_y1, weights[s_index], axes=([2], [0]))
    # contract one axis at a time, cycling so the result keeps (s1, s2, s3) order
    k3_222 = kappa3_y1
    for _ in range(3):
        k3_222 = np.tensordot(k3_222, weights, axes=([0], [1]))
    return k3_222, k3_112_slice


def truncated_gaussian_kernel(s_points: np.ndarray, u_points: np.ndarray, du: float) -> np.ndarray:
    """
    Directional kernel: a Gaussian in u centred on s, truncated to u <= s

    The standard deviation grows with distance, 0.5 + 0.2 |u - s|, and each
    row is renormalized so that its Riemann sum is one.
    """
    s_points = np.atleast_1d(np.asarray(s_points, dtype=float))
    u_points = np.asarray(u_points, dtype=float)
    offset = u_points[None, :] - s_points[:, None]
    sigma = 0.5 + 0.2 * np.abs(offset)
    values = np.where(offset <= 0.0, norm.pdf(offset / sigma) / sigma, 0.0)
    totals = values.sum(axis=1, keepdims=True) * du
    if np.any(totals <= 0):
        raise ParameterError("kernel row has no support on the grid")
    return values / totals


@dataclass
class CumulantExample:
    """Slices at s = 0 of the propagated cumulants on a 1-D domain"""
    u_points: np.ndarray
    kernel: Kernel1D
    kernel_at_zero: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    k2_21: np.ndarray
    k3_211: np.ndarray
    k3_222: np.ndarray


def transport_example(grid_n: int = 100, theta11: float = 0.8, theta12: float = 1.7,
                      tau1: float = 1.0, log_mean: float = -2.0) -> CumulantExample:
    """
    Cumulants of a lognormal flux on [-10, 10] pushed through a directional kernel

    The grid is the midpoint grid with spacing 20 / grid_n; the s = 0 row of
    the kernel is evaluated directly, so grid_n need not be odd.

    Returns:
        CumulantExample with kappa2(Y2(0), Y1(u2)), kappa3(Y2(0), Y1(u2), Y1(u3))
        and kappa3(Y2(0), Y2(s2), Y2(s3))
    """
    if grid_n < 21:
        raise ParameterError(f"grid_n must be at least 21, got {grid_n}")
    du = 20.0 / grid_n
    u_points = -10.0 + du * (np.arange(grid_n) + 0.5)
    logger.info(f"Building cumulant example on {grid_n} points (du={du:.3f})")

    kernel = Kernel1D(truncated_gaussian_kernel(u_points, u_points, du), du, u_points, u_points)
    row0 = truncated_gaussian_kernel(np.array([0.0]), u_points, du)[0]
    weights0 = row0 * du

    log_cov = powered_exp_corr(FluxCorrParams(theta11, theta12), u_points) / tau1
    spec = LognormalFieldSpec(np.full(grid_n, log_mean), log_cov)
    kappa1, kappa2, kappa3 = lognormal_cumulants(spec)

    k2_21 = weights0 @ kappa2
    k3_211 = np.tensordot(weights0, kappa3, axes=1)
    full_weights = kernel.weights
    k3_222 = full_weights @ k3_211 @ full_weights.T

    return CumulantExample(
        u_points=u_points,
        kernel=kernel,
        kernel_at_zero=row0,
        kappa1=kappa1,
        kappa2=kappa2,
        k2_21=k2_21,
        k3_211=k3_211,
        k3_222=k3_222,
    )


def sample_lognormal(spec: LognormalFieldSpec, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Draws of the lognormal field, shape (n_draws, n)"""
    mean = np.asarray(spec.mean, dtype=float)
    gaussian = rng.multivariate_normal(mean, np.asarray(spec.cov, dtype=float), size=n_draws, method='eigh')
    return np.exp(gaussian)


def jackknife_cumulant(x: np.ndarray, y: np.ndarray, z: Optional[np.ndarray] = None,
                       n_blocks: int = 20) -> Tuple[float, float]:
    """
    Sample joint cumulant of two or three variables with a delete-a-block jackknife standard error

    Returns:
        Tuple of (estimate, standard error)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    arrays = [x, y] if z is None else [x, y, np.asarray(z, dtype=float)]
    n = x.size
    if any(a.size != n for a in arrays) or n < 2 * n_blocks:
        raise ParameterError("jackknife needs equal-length samples with at least two draws per block")

    def estimate(mask: Optional[np.ndarray] = None) -> float:
        cols = arrays if mask is None else [a[mask] for a in arrays]
        centred = [c - c.mean() for c in cols]
        return float(np.mean(np.prod(centred, axis=0)))

    full = estimate()
    blocks = np.array_split(np.arange(n), n_blocks)
    leave_out = np.empty(n_blocks)
    for i, idx in enumerate(blocks):
        mask = np.ones(n, dtype=bool)
        mask[idx] = False
        leave_out[i] = estimate(mask)
    se = float(np.sqrt((n_blocks - 1) / n_blocks * np.sum((leave_out - leave_out.mean()) ** 2)))
    return full, se
