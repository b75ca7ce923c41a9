"""Core VPM SDK components."""

from .config import VPMConfig, load_config
from .models import Action, GridMap, PenaltyField, AgentState, WorldState, TrajectoryLog
from .exceptions import VPMError, ConfigurationError, InvalidStateError
from .factories import Policy, PolicyFactory

__all__ = [
    'VPMConfig',
    'load_config',
    'Action',
    'GridMap',
    'PenaltyField',
    'AgentState',
    'WorldState',
    'TrajectoryLog',
    'VPMError',
    'ConfigurationError',
    'InvalidStateError',
    'Policy',
    'PolicyFactory',
]
