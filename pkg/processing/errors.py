"""
Error Hierarchy
Exceptions raised by the inversion engine, grouped by what went wrong
"""

from typing import Any, Dict, Optional


class FluxInversionError(Exception):
    """Base class for every error raised by fluxinv"""


class DomainError(FluxInversionError, ValueError):
    """Value outside the domain or image of a transformation"""


class ParameterError(FluxInversionError, ValueError):
    """Model parameter outside its admissible range"""


class ConditioningError(FluxInversionError, ArithmeticError):
    """Factorization failed or a design matrix is rank deficient"""


class ImproprietyError(FluxInversionError, ArithmeticError):
    """Sum of squared residuals collapsed, so the flux conditional is improper"""


class SamplerError(FluxInversionError, RuntimeError):
    """MCMC kernel could not complete a transition"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ', '.join(f'{k}={v}' for k, v in self.diagnostics.items())
        return f'{base} ({details})'


class SimulationError(FluxInversionError, RuntimeError):
    """Synthetic data could not be generated with the requested settings"""


class FormatError(FluxInversionError, ValueError):
    """Input file does not follow its schema"""

    def __init__(self, message: str, path: Optional[str] = None, row: Optional[int] = None):
        self.path = path
        self.row = row
        location = ''
        if path is not None:
            location = f'{path}'
            if row is not None:
                location += f', row {row}'
            location += ': '
        super().__init__(f'{location}{message}')


class ConfigError(FluxInversionError, ValueError):
    """Run configuration is missing a key or has an invalid value"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        prefix = f'[{key}] ' if key else ''
        super().__init__(f'{prefix}{message}')
