"""
VPM SDK Factory Classes

This module provides the policy interface and a registry for creating
joint-action policies by name, with plugin support for extensibility.
"""

from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Type, TYPE_CHECKING

import numpy as np

from .exceptions import PolicyError
from .models import Action, Cell, GridMap, WorldState
from ..utils.logging import get_logger

if TYPE_CHECKING:
    from .config import VPMConfig

logger = get_logger(__name__)


class Policy(ABC):
    """
    Joint-action policy driving every agent of one episode.

    A policy is advanced by a single caller; ``reset`` is called once per
    episode before the first ``act``.
    """

    name: str = "policy"

    def initial_positions(
        self,
        grid_map: GridMap,
        n_agents: int,
        fov: int,
        rng: np.random.Generator
    ) -> Optional[List[Cell]]:
        """Start cells this policy requires, or None to accept the map's."""
        return None

    def reset(self, world: WorldState, rng: np.random.Generator) -> None:
        """Prepare for a new episode starting at ``world``."""

    @abstractmethod
    def act(self, world: WorldState, rng: np.random.Generator) -> List[Action]:
        """Return one action per agent for the current state."""
        pass


class PolicyFactory:
    """Factory for creating joint-action policies."""

    _policies: Dict[str, Type[Policy]] = {}
    _builtins_loaded = False

    @classmethod
    def register(cls, kind: str, policy_class: Type[Policy]):
        """Register a policy class under a kind name."""
        cls._policies[kind.lower()] = policy_class
        logger.debug(f"Registered policy {kind}")

    @classmethod
    def create(cls, spec: str, config: 'VPMConfig') -> Policy:
        """
        Create a policy from a spec string.

        ``spec`` is a registered kind, optionally followed by ``:argument``
        (``net:checkpoints/vpm_00500`` loads a trained network).
        """
        if not cls._builtins_loaded:
            cls._builtins_loaded = True
            register_builtin_components()

        kind, _, argument = spec.partition(':')
        kind = kind.lower()
        if kind not in cls._policies:
            raise PolicyError(
                f"No policy registered for kind: {kind}",
                {'registered': cls.list_registered()}
            )

        policy_class = cls._policies[kind]
        return policy_class(config, argument or None)

    @classmethod
    def list_registered(cls) -> list:
        """List all registered policy kinds."""
        return list(cls._policies.keys())


def register_policy(kind: str):
    """Decorator for registering policies."""
    def decorator(cls):
        PolicyFactory.register(kind, cls)
        return cls
    return decorator


def register_builtin_components():
    """Register all built-in policies."""
    from ..planners.random_policy import RandomPolicy
    from ..planners.gcs import GCSPolicy
    from ..planners.tspc import TSPCPolicy
    PolicyFactory.register("random", RandomPolicy)
    PolicyFactory.register("gcs", GCSPolicy)
    PolicyFactory.register("tspc", TSPCPolicy)

    try:
        from ..learning.trainer import NetPolicy
        PolicyFactory.register("net", NetPolicy)
    except ImportError:
        logger.debug("Learned policy not available")
