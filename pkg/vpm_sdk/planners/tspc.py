"""
TSP-Cyclic baseline: agents spaced evenly along one closed tour through
guard points that together see every free cell.
"""

import threading
from typing import Dict, Iterator, List, Optional, Tuple, TYPE_CHECKING

import numpy as np

from ..core.factories import Policy
from ..core.models import Action, Cell, GridMap, WorldState
from ..utils.logging import get_logger
from .routing import Tour, guard_points, shortest_path, tsp_tour

if TYPE_CHECKING:
    from ..core.config import VPMConfig

logger = get_logger(__name__)

_tour_cache: Dict[Tuple[bytes, int], Tour] = {}
_tour_lock = threading.Lock()


def monitoring_tour(grid_map: GridMap, fov: int) -> Tour:
    """Tour through the greedy guard cover of ``grid_map`` (cached per map and fov)."""
    key = (grid_map.key(), int(fov))
    with _tour_lock:
        tour = _tour_cache.get(key)
    if tour is None:
        tour = tsp_tour(guard_points(grid_map, fov), grid_map)
        with _tour_lock:
            _tour_cache[key] = tour
        logger.info(
            f"TSPC tour for {grid_map.name}: {len(tour.points)} guard points, "
            f"cycle length {tour.length}"
        )
    return tour


def tspc_offsets(tour: Tour, n_agents: int) -> List[int]:
    """Cycle index of agent i: floor(i * len / n)."""
    size = len(tour.cycle)
    return [(i * size) // n_agents for i in range(n_agents)]


def _move(src: Cell, dst: Cell) -> Action:
    return Action.from_delta(dst[0] - src[0], dst[1] - src[1])


def tspc_policy(tour: Tour, n_agents: int) -> Iterator[List[Action]]:
    """
    Endless joint-action stream for agents starting on their tour offsets.

    Every step each agent advances one cell along the cycle.
    """
    size = len(tour.cycle)
    offsets = tspc_offsets(tour, n_agents)
    t = 0
    while True:
        yield [
            _move(tour.cell_at(offset + t), tour.cell_at(offset + t + 1))
            for offset in offsets
        ]
        t = (t + 1) % size


class TSPCPolicy(Policy):
    """
    TSP-Cyclic as a joint-action policy.

    Episodes normally start with agents on their offsets. An agent placed
    elsewhere first walks to its offset cell and joins the cycle there.
    """

    name = "tspc"

    def __init__(self, config: Optional['VPMConfig'] = None, argument: Optional[str] = None):
        self.tour: Optional[Tour] = None
        self.indices: List[int] = []
        self.joined: List[bool] = []

    def initial_positions(
        self,
        grid_map: GridMap,
        n_agents: int,
        fov: int,
        rng: np.random.Generator,
    ) -> Optional[List[Cell]]:
        tour = monitoring_tour(grid_map, fov)
        return [tour.cell_at(offset) for offset in tspc_offsets(tour, n_agents)]

    def reset(self, world: WorldState, rng: np.random.Generator) -> None:
        self.tour = monitoring_tour(world.map, world.fov)
        self.indices = tspc_offsets(self.tour, world.n_agents)
        self.joined = [
            agent.position == self.tour.cell_at(index)
            for agent, index in zip(world.agents, self.indices)
        ]
        if not all(self.joined):
            logger.info("Some agents start off their tour offsets and will walk there first")

    def act(self, world: WorldState, rng: np.random.Generator) -> List[Action]:
        if self.tour is None or len(self.indices) != world.n_agents:
            self.reset(world, rng)

        joint_action = []
        for agent in world.agents:
            i = agent.id
            slot = self.tour.cell_at(self.indices[i])
            if not self.joined[i] and agent.position == slot:
                self.joined[i] = True

            if self.joined[i]:
                nxt = self.tour.cell_at(self.indices[i] + 1)
                self.indices[i] = (self.indices[i] + 1) % len(self.tour.cycle)
                joint_action.append(_move(agent.position, nxt))
            else:
                path = shortest_path(world.map, agent.position, slot)
                joint_action.append(_move(agent.position, path[0]) if path else Action.STAY)
        return joint_action
