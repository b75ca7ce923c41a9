"""
VPM SDK - Visibility-Based Persistent Monitoring for Multi-Agent Teams

This package simulates agents that must keep every cell of a grid map in
line of sight, and provides planning baselines, a shared-weight
graph-attention actor-critic trained with PPO, and an experiment harness.

Example Usage:
    from vpm_sdk import VPMConfig, compare, run_policy

    config = VPMConfig()
    config.environment.map = "open_20"
    config.environment.fov = 11
    log, penalty = run_policy(config, "gcs", seed=0, steps=500)

    # Compare baselines over seeds
    report = compare(config)
    print(report.format_table())
"""

from .version import __version__
from .core.config import VPMConfig, load_config
from .core.exceptions import (
    VPMError,
    ConfigurationError,
    MapFormatError,
    InvalidStateError,
    PolicyError,
    CheckpointError,
    TrainingDivergedError,
)
from .core.models import Action, GridMap, ObservationMode, PenaltyField, TrajectoryLog, WorldState
from .core.factories import Policy, PolicyFactory, register_policy
from .world.gridworld import load_map, reset_world, step, step_detailed
from .world.maps import list_maps, resolve_map
from .world.visibility import visible_cells
from .harness.runner import run_episode, run_policy
from .harness.experiment import ExperimentReport, compare

__all__ = [
    # Configuration
    'VPMConfig',
    'load_config',

    # Errors
    'VPMError',
    'ConfigurationError',
    'MapFormatError',
    'InvalidStateError',
    'PolicyError',
    'CheckpointError',
    'TrainingDivergedError',

    # World
    'Action',
    'GridMap',
    'ObservationMode',
    'PenaltyField',
    'TrajectoryLog',
    'WorldState',
    'load_map',
    'reset_world',
    'step',
    'step_detailed',
    'list_maps',
    'resolve_map',
    'visible_cells',

    # Policies and harness
    'Policy',
    'PolicyFactory',
    'register_policy',
    'run_episode',
    'run_policy',
    'compare',
    'ExperimentReport',

    # Version
    '__version__',
]
