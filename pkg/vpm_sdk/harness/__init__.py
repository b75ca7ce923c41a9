"""Episode runner, experiment grid, trajectory analysis and image output."""

from .analysis import detect_period, phase_difference, polar_series
from .experiment import ExperimentReport, compare
from .images import emit_trail, write_pgm
from .runner import load_log, run_episode, run_policy, save_log

__all__ = [
    'detect_period',
    'phase_difference',
    'polar_series',
    'ExperimentReport',
    'compare',
    'emit_trail',
    'write_pgm',
    'load_log',
    'run_episode',
    'run_policy',
    'save_log',
]
