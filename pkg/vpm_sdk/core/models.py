"""
VPM SDK Core Models

This module defines the core data models and types used throughout the VPM SDK.
"""

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Optional, Dict, Any, List, Tuple

import numpy as np

from .exceptions import InvalidStateError

Cell = Tuple[int, int]


class Action(IntEnum):
    """The five agent moves: four neighbours and staying in place."""
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4

    @property
    def delta(self) -> Cell:
        return ACTION_DELTAS[self]

    @classmethod
    def from_delta(cls, dr: int, dc: int) -> 'Action':
        """Map a unit displacement back to its action."""
        for action, delta in ACTION_DELTAS.items():
            if delta == (dr, dc):
                return action
        raise InvalidStateError(f"No action moves by ({dr}, {dc})")


ACTION_DELTAS: Dict[Action, Cell] = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
    Action.STAY: (0, 0),
}

NUM_ACTIONS = len(Action)


class ObservationMode(str, Enum):
    """Which observation channels are fed to the network."""
    LOCAL = "local"
    MINI = "mini"
    BOTH = "both"

    @property
    def channels(self) -> int:
        return 2 if self is ObservationMode.BOTH else 1


class PolicyKind(str, Enum):
    """Available joint-action policies."""
    GCS = "gcs"
    TSPC = "tspc"
    RANDOM = "random"
    NET = "net"


@dataclass(frozen=True, eq=False)
class GridMap:
    """Static occupancy grid. ``obstacles[r, c]`` is True for walls."""

    obstacles: np.ndarray
    name: str = "unnamed"

    def __post_init__(self):
        grid = np.asarray(self.obstacles, dtype=bool)
        if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
            raise InvalidStateError(f"Map must be a non-empty 2D grid, got shape {grid.shape}")
        grid = grid.copy()
        grid.setflags(write=False)
        object.__setattr__(self, 'obstacles', grid)

    @property
    def height(self) -> int:
        return self.obstacles.shape[0]

    @property
    def width(self) -> int:
        return self.obstacles.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.obstacles.shape

    @property
    def free_mask(self) -> np.ndarray:
        return ~self.obstacles

    @property
    def free_count(self) -> int:
        return int(self.free_mask.sum())

    def free_cells(self) -> List[Cell]:
        """All free cells in row-major order."""
        rows, cols = np.nonzero(self.free_mask)
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.obstacles[cell[0], cell[1]]

    def key(self) -> bytes:
        """Content key used to cache per-map precomputations."""
        return self.obstacles.tobytes() + np.array(self.shape, dtype=np.int64).tobytes()

    def to_text(self, starts: Optional[List[Cell]] = None) -> str:
        """Render back to the map-file alphabet."""
        starts = set(starts or [])
        lines = []
        for r in range(self.height):
            row = []
            for c in range(self.width):
                if self.obstacles[r, c]:
                    row.append('#')
                elif (r, c) in starts:
                    row.append('A')
                else:
                    row.append('.')
            lines.append(''.join(row))
        return '\n'.join(lines) + '\n'


@dataclass(frozen=True, eq=False)
class PenaltyField:
    """
    Per-cell reward values R(k) in [-r_max, 0].

    Obstacle cells hold 0 and are excluded from every sum through ``free_mask``.
    ``viewed`` is only tracked in coverage mode, where a cell stops decaying
    once any agent has seen it.
    """

    values: np.ndarray
    decay_rate: float
    r_max: float
    free_mask: np.ndarray
    coverage_mode: bool = False
    viewed: Optional[np.ndarray] = None

    @classmethod
    def zeros(
        cls,
        grid_map: GridMap,
        decay_rate: float,
        r_max: float,
        coverage_mode: bool = False,
    ) -> 'PenaltyField':
        if decay_rate < 0:
            raise InvalidStateError("Decay rate must be non-negative", {'decay_rate': decay_rate})
        if r_max <= 0:
            raise InvalidStateError("Maximum penalty must be positive", {'r_max': r_max})
        viewed = np.zeros(grid_map.shape, dtype=bool) if coverage_mode else None
        return cls(
            values=np.zeros(grid_map.shape, dtype=np.float64),
            decay_rate=float(decay_rate),
            r_max=float(r_max),
            free_mask=grid_map.free_mask,
            coverage_mode=coverage_mode,
            viewed=viewed,
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def magnitude(self) -> np.ndarray:
        """Penalty magnitudes |R(k)|, zero on obstacles."""
        return np.where(self.free_mask, -self.values, 0.0)


@dataclass(frozen=True)
class AgentState:
    """One agent: its index and current cell."""
    id: int
    position: Cell


@dataclass(frozen=True, eq=False)
class WorldState:
    """The full Markov state: map, penalty field, agent positions and time."""

    map: GridMap
    penalties: PenaltyField
    agents: Tuple[AgentState, ...]
    fov: int
    t: int = 0

    def __post_init__(self):
        if self.t < 0:
            raise InvalidStateError("Timestep must be non-negative", {'t': self.t})
        for agent in self.agents:
            if not self.map.is_free(agent.position):
                raise InvalidStateError(
                    f"Agent {agent.id} is not on a free cell",
                    {'position': agent.position}
                )

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def positions(self) -> List[Cell]:
        return [agent.position for agent in self.agents]

    def agent(self, agent_id: int) -> AgentState:
        if not 0 <= agent_id < len(self.agents):
            raise InvalidStateError(f"Invalid agent id: {agent_id}", {'n_agents': len(self.agents)})
        return self.agents[agent_id]

    def with_penalties(self, values: np.ndarray) -> 'WorldState':
        """Copy of this state with the penalty values replaced (scenario set-up)."""
        values = np.where(self.map.free_mask, np.asarray(values, dtype=np.float64), 0.0)
        return replace(self, penalties=replace(self.penalties, values=values))


@dataclass
class TrajectoryLog:
    """Per-step record of one episode."""

    positions: List[Tuple[Cell, ...]] = field(default_factory=list)
    actions: List[Tuple[int, ...]] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    visibility: Optional[List[np.ndarray]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.rewards)

    @property
    def n_agents(self) -> int:
        return len(self.positions[0]) if self.positions else 0

    def agent_series(self, agent: int, axis: int = 0) -> List[int]:
        """Row (axis=0) or column (axis=1) coordinate of one agent over time."""
        if not 0 <= agent < self.n_agents:
            raise InvalidStateError(f"Invalid agent id: {agent}", {'n_agents': self.n_agents})
        return [step[agent][axis] for step in self.positions]

    def cumulative_penalty(self) -> float:
        return float(sum(abs(r) for r in self.rewards))
