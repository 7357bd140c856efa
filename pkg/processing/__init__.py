"""
Processing Package
Transforms, covariance structures, the hierarchical model and its samplers
"""

from .errors import FluxInversionError
from .boxcox import BoxCoxParam
from .covariance import DiscrepancyParams, FluxCorrParams, SeparablePrecision, ShiftedFactor
from .model import HierarchicalModel, PriorBounds
from .samplers import HmcConfig, PosteriorSamples, run_gibbs

__all__ = [
    'FluxInversionError',
    'BoxCoxParam',
    'DiscrepancyParams',
    'FluxCorrParams',
    'SeparablePrecision',
    'ShiftedFactor',
    'HierarchicalModel',
    'PriorBounds',
    'HmcConfig',
    'PosteriorSamples',
    'run_gibbs'
]
