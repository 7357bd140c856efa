"""
Outputs Package
Posterior diagnostics, scores and run summaries
"""

from .diagnostics import RegionMask, aggregate_table, score_row, summarize_flux
from .run_summary import build_run_summary, write_run_summary

__all__ = [
    'RegionMask',
    'aggregate_table',
    'score_row',
    'summarize_flux',
    'build_run_summary',
    'write_run_summary'
]
