"""
Data Sources Package
Input file formats and the synthetic observing-system simulator
"""

from .osse_simulator import OsseConfig, OsseSimulator, simulate_boxcox_field

__all__ = [
    'OsseConfig',
    'OsseSimulator',
    'simulate_boxcox_field'
]
