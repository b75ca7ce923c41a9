"""Uniform random baseline."""

from typing import List, Optional, TYPE_CHECKING

import numpy as np

from ..core.factories import Policy
from ..core.models import Action, NUM_ACTIONS, WorldState

if TYPE_CHECKING:
    from ..core.config import VPMConfig


def random_policy(n_agents: int, rng: np.random.Generator) -> List[Action]:
    """Independent uniform action per agent."""
    return [Action(int(a)) for a in rng.integers(0, NUM_ACTIONS, size=n_agents)]


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, config: Optional['VPMConfig'] = None, argument: Optional[str] = None):
        pass

    def act(self, world: WorldState, rng: np.random.Generator) -> List[Action]:
        return random_policy(world.n_agents, rng)
