"""
Box-Cox Transformation
Forward/inverse transform, Jacobian, derivatives and truncation indicator
for the power-normal flux model
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import DomainError, ParameterError

# |lambda| below this uses the log branch
LAMBDA_EPS = 1e-8

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class BoxCoxParam:
    """Transformation parameter lambda (dimensionless)"""
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ParameterError(f"Box-Cox lambda must be finite, got {self.value}")

    @property
    def is_log(self) -> bool:
        return abs(self.value) < LAMBDA_EPS


def _lam(lam: Union[float, BoxCoxParam]) -> float:
    value = lam.value if isinstance(lam, BoxCoxParam) else float(lam)
    if not np.isfinite(value):
        raise ParameterError(f"Box-Cox lambda must be finite, got {value}")
    return value


def _positive(y: ArrayLike, what: str = 'y') -> np.ndarray:
    arr = np.asarray(y, dtype=float)
    if not np.all(arr > 0):
        raise DomainError(f"Box-Cox {what} must be strictly positive")
    return arr


def _out(arr: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def forward(y: ArrayLike, lam: Union[float, BoxCoxParam]) -> ArrayLike:
    """
    Apply g_lambda element-wise

    Args:
        y: Positive value(s)
        lam: Transformation parameter

    Returns:
        (y^lambda - 1)/lambda, or ln y on the log branch
    """
    lam = _lam(lam)
    arr = _positive(y)
    log_y = np.log(arr)
    if abs(lam) < LAMBDA_EPS:
        return _out(log_y, y)
    return _out(np.expm1(lam * log_y) / lam, y)


def inverse(g: ArrayLike, lam: Union[float, BoxCoxParam]) -> ArrayLike:
    """
    Invert g_lambda element-wise

    Args:
        g: Transformed value(s), which must lie in the image of g_lambda
        lam: Transformation parameter

    Returns:
        (lambda*g + 1)^(1/lambda), or exp(g) on the log branch

    Raises:
        DomainError: If any g lies outside the image (truncation region)
    """
    lam = _lam(lam)
    arr = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Box-Cox inverse requires finite input")
    if abs(lam) < LAMBDA_EPS:
        return _out(np.exp(arr), g)
    base = lam * arr
    # g > -1/lambda (lambda > 0) and g < -1/lambda (lambda < 0) both mean 1 + lambda*g > 0
    if not np.all(base > -1.0):
        raise DomainError(f"value outside the image of the Box-Cox transform for lambda={lam}")
    return _out(np.exp(np.log1p(base) / lam), g)


def log_jacobian(y: ArrayLike, lam: Union[float, BoxCoxParam]) -> float:
    """Sum over elements of (lambda - 1) ln y"""
    lam = _lam(lam)
    arr = _positive(y)
    return float((lam - 1.0) * np.sum(np.log(arr)))


def derivatives(y: ArrayLike, lam: Union[float, BoxCoxParam]) -> Tuple[ArrayLike, ArrayLike]:
    """
    First and second derivatives of g_lambda at y

    Both branches share the same expressions: y^(lambda-1) and
    (lambda-1) y^(lambda-2), which reduce to 1/y and -1/y^2 at lambda = 0.
    """
    lam = _lam(lam)
    arr = _positive(y)
    first = np.power(arr, lam - 1.0)
    second = (lam - 1.0) * np.power(arr, lam - 2.0)
    return _out(first, y), _out(second, y)


def truncation_ok(g: ArrayLike, lam: Union[float, BoxCoxParam]) -> bool:
    """True iff every element of g lies in the image of g_lambda"""
    lam = _lam(lam)
    if abs(lam) < LAMBDA_EPS:
        return True
    arr = np.asarray(g, dtype=float)
    return bool(np.all(1.0 + lam * arr > 0.0))
