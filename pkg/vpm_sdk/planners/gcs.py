"""
Greedy Centralized Search baseline.

Candidates are the highest-penalty cells, greedily thinned so that no two
lie within ``d_min`` of each other. Unassigned agents claim the nearest
unclaimed candidate by path length, in agent-id order, and walk there along
a committed shortest path.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, TYPE_CHECKING

import numpy as np

from ..core.factories import Policy
from ..core.models import Action, Cell, WorldState
from ..utils.logging import get_logger
from .routing import UNREACHABLE, distance_field, shortest_path

if TYPE_CHECKING:
    from ..core.config import VPMConfig

logger = get_logger(__name__)

DEFAULT_D_MIN = 12.0


@dataclass
class Assignment:
    """Per-agent target cell and the rest of its committed path."""

    targets: List[Optional[Cell]] = field(default_factory=list)
    paths: List[List[Cell]] = field(default_factory=list)

    @classmethod
    def empty(cls, n_agents: int) -> 'Assignment':
        return cls(targets=[None] * n_agents, paths=[[] for _ in range(n_agents)])

    def copy(self) -> 'Assignment':
        return Assignment(targets=list(self.targets), paths=[list(p) for p in self.paths])

    def claimed(self) -> List[Cell]:
        return [target for target in self.targets if target is not None]


def gcs_select_candidates(state: WorldState, d_min: float) -> List[Cell]:
    """
    Thinned list of high-penalty cells, in selection order.

    Nonzero-penalty cells are taken by descending magnitude (row-major among
    equals); each pick removes every remaining cell within Euclidean
    distance ``d_min`` of it, itself included.
    """
    magnitude = state.penalties.magnitude()
    rows, cols = np.nonzero(magnitude > 0)
    if len(rows) == 0:
        return []

    # lexsort keys: last is primary
    order = np.lexsort((cols, rows, -magnitude[rows, cols]))
    rows, cols = rows[order], cols[order]
    alive = np.ones(len(rows), dtype=bool)

    candidates: List[Cell] = []
    d_min_sq = float(d_min) ** 2
    for k in range(len(rows)):
        if not alive[k]:
            continue
        r, c = int(rows[k]), int(cols[k])
        candidates.append((r, c))
        alive &= (rows - r) ** 2 + (cols - c) ** 2 > d_min_sq
    return candidates


def _release_finished(state: WorldState, assignment: Assignment) -> Assignment:
    result = assignment.copy()
    values = state.penalties.values
    for agent in state.agents:
        target = result.targets[agent.id]
        if target is None:
            continue
        path = result.paths[agent.id]
        on_route = not path or (
            abs(path[0][0] - agent.position[0]) + abs(path[0][1] - agent.position[1]) == 1
        )
        if agent.position == target or values[target] == 0 or not on_route:
            result.targets[agent.id] = None
            result.paths[agent.id] = []
    return result


def gcs_step(
    state: WorldState,
    assignment: Assignment,
    d_min: float = DEFAULT_D_MIN
) -> Tuple[List[Action], Assignment]:
    """One GCS decision for all agents; returns the joint action and new assignment."""
    if len(assignment.targets) != state.n_agents:
        assignment = Assignment.empty(state.n_agents)

    assignment = _release_finished(state, assignment)
    candidates = gcs_select_candidates(state, d_min)
    claimed = set(assignment.claimed())

    for agent in state.agents:
        if assignment.targets[agent.id] is not None:
            continue
        open_candidates = [cell for cell in candidates if cell not in claimed]
        if not open_candidates:
            continue

        dist = distance_field(state.map, agent.position)
        best = None
        best_distance = None
        for cell in open_candidates:
            d = dist[cell]
            if d == UNREACHABLE:
                continue
            if best is None or d < best_distance:
                best, best_distance = cell, d
        if best is None:
            logger.warning(f"Agent {agent.id} cannot reach any open candidate")
            continue

        assignment.targets[agent.id] = best
        assignment.paths[agent.id] = shortest_path(state.map, agent.position, best)
        claimed.add(best)

    joint_action: List[Action] = []
    for agent in state.agents:
        path = assignment.paths[agent.id]
        if assignment.targets[agent.id] is None or not path:
            joint_action.append(Action.STAY)
            continue
        nxt = path.pop(0)
        joint_action.append(Action.from_delta(nxt[0] - agent.position[0], nxt[1] - agent.position[1]))

    return joint_action, assignment


class GCSPolicy(Policy):
    """Greedy Centralized Search as a joint-action policy."""

    name = "gcs"

    def __init__(
        self,
        config: Optional['VPMConfig'] = None,
        argument: Optional[str] = None,
        d_min: Optional[float] = None,
    ):
        if d_min is None:
            d_min = float(argument) if argument else (
                config.planner.d_min if config is not None else DEFAULT_D_MIN
            )
        self.d_min = float(d_min)
        self.assignment = Assignment()

    def reset(self, world: WorldState, rng: np.random.Generator) -> None:
        self.assignment = Assignment.empty(world.n_agents)

    def act(self, world: WorldState, rng: np.random.Generator) -> List[Action]:
        joint_action, self.assignment = gcs_step(world, self.assignment, self.d_min)
        return joint_action
