"""
Grid world dynamics: map parsing, agent kinematics and the penalty recurrence.

Every cell starts at 0. A cell seen by any agent is reset to 0, every other
free cell loses ``decay_rate`` per step down to ``-r_max``. The shared reward
is the sum over all free cells.
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import InvalidStateError, MapFormatError
from ..core.models import (
    Action, AgentState, Cell, GridMap, PenaltyField, WorldState,
)
from ..utils.logging import get_logger
from .visibility import joint_visibility

logger = get_logger(__name__)

FREE_CHAR = '.'
OBSTACLE_CHAR = '#'
AGENT_CHAR = 'A'
MAP_ALPHABET = frozenset((FREE_CHAR, OBSTACLE_CHAR, AGENT_CHAR))


@dataclass
class StepResult:
    """Outcome of one joint transition."""
    state: WorldState
    reward: float
    visible: np.ndarray


def load_map(text: str, name: str = "unnamed") -> Tuple[GridMap, List[Cell]]:
    """
    Parse map-file text.

    Returns the map and the declared agent starts in row-major order.
    """
    lines = [line.rstrip('\r') for line in text.split('\n')]
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        raise MapFormatError("Map text is empty")

    width = len(lines[0])
    if width == 0:
        raise MapFormatError("Map rows must be non-empty", line=1)

    obstacles = np.zeros((len(lines), width), dtype=bool)
    starts: List[Cell] = []
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapFormatError(
                f"Ragged map row {r + 1}: expected {width} cells, got {len(line)}",
                line=r + 1
            )
        for c, char in enumerate(line):
            if char not in MAP_ALPHABET:
                raise MapFormatError(
                    f"Unknown map character {char!r} at row {r + 1}, column {c + 1}",
                    line=r + 1
                )
            if char == OBSTACLE_CHAR:
                obstacles[r, c] = True
            elif char == AGENT_CHAR:
                starts.append((r, c))

    if obstacles.all():
        raise MapFormatError("Map has zero free cells", details={'name': name})

    grid_map = GridMap(obstacles=obstacles, name=name)
    logger.debug(
        f"Loaded map {name}: {grid_map.height}x{grid_map.width}, "
        f"{grid_map.free_count} free cells, {len(starts)} declared starts"
    )
    return grid_map, starts


def load_map_file(path: Union[str, Path]) -> Tuple[GridMap, List[Cell]]:
    """Load a map file; the map is named after the file stem."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise MapFormatError(f"Cannot read map file {path}: {e}")
    return load_map(text, name=path.stem)


def apply_action(agent: AgentState, action: Action, grid_map: GridMap) -> AgentState:
    """Move one cell; blocked or off-map moves degrade to Stay."""
    dr, dc = Action(action).delta
    target = (agent.position[0] + dr, agent.position[1] + dc)
    if not grid_map.is_free(target):
        return agent
    return AgentState(id=agent.id, position=target)


def update_penalties(field: PenaltyField, visible: np.ndarray) -> PenaltyField:
    """Apply one step of the reset / decay-and-clamp recurrence."""
    visible = np.asarray(visible, dtype=bool)
    if visible.shape != field.shape:
        raise InvalidStateError(
            "Visibility mask shape does not match the map",
            {'mask_shape': visible.shape, 'map_shape': field.shape}
        )

    decayed = np.maximum(field.values - field.decay_rate, -field.r_max)
    viewed = field.viewed
    if field.coverage_mode:
        viewed = field.viewed | visible
        # once seen, a cell keeps its reset value
        decayed = np.where(viewed, 0.0, decayed)

    values = np.where(visible, 0.0, decayed)
    values = np.where(field.free_mask, values, 0.0)
    return replace(field, values=values, viewed=viewed)


def shared_reward(field: PenaltyField) -> float:
    """Sum of R over all free cells (non-positive)."""
    return float(field.values[field.free_mask].sum())


def step_detailed(state: WorldState, joint_action: Sequence[Action]) -> StepResult:
    """Advance the world by one step and keep the joint visibility mask."""
    if len(joint_action) != state.n_agents:
        raise InvalidStateError(
            f"Expected {state.n_agents} actions, got {len(joint_action)}",
            {'t': state.t}
        )

    agents = tuple(
        apply_action(agent, action, state.map)
        for agent, action in zip(state.agents, joint_action)
    )
    visible = joint_visibility(state.map, [agent.position for agent in agents], state.fov)
    penalties = update_penalties(state.penalties, visible)
    successor = replace(state, agents=agents, penalties=penalties, t=state.t + 1)
    return StepResult(state=successor, reward=shared_reward(penalties), visible=visible)


def step(state: WorldState, joint_action: Sequence[Action]) -> Tuple[WorldState, float]:
    """Advance the world by one step; returns the successor and its shared reward."""
    result = step_detailed(state, joint_action)
    return result.state, result.reward


def random_free_cells(
    grid_map: GridMap,
    count: int,
    rng: np.random.Generator
) -> List[Cell]:
    """Uniform random free cells, distinct while the map has room."""
    free = grid_map.free_cells()
    picks = rng.choice(len(free), size=count, replace=count > len(free))
    return [free[int(i)] for i in picks]


def reset_world(
    grid_map: GridMap,
    n_agents: int,
    fov: int,
    decay_rate: float = 1.0,
    r_max: float = 400.0,
    starts: Optional[Sequence[Cell]] = None,
    rng: Optional[np.random.Generator] = None,
    coverage_mode: bool = False,
) -> WorldState:
    """
    Build the t=0 state with all penalties at 0.

    Declared starts are used when there are at least ``n_agents`` of them;
    otherwise agents are placed uniformly at random with ``rng``.
    """
    if n_agents < 1:
        raise InvalidStateError("At least one agent is required", {'n_agents': n_agents})

    if starts is not None and len(starts) >= n_agents:
        positions = [tuple(cell) for cell in starts[:n_agents]]
    else:
        if rng is None:
            raise InvalidStateError(
                "A random generator is required for random start placement",
                {'declared_starts': 0 if starts is None else len(starts), 'n_agents': n_agents}
            )
        positions = random_free_cells(grid_map, n_agents, rng)

    penalties = PenaltyField.zeros(grid_map, decay_rate, r_max, coverage_mode)
    agents = tuple(AgentState(id=i, position=pos) for i, pos in enumerate(positions))
    return WorldState(map=grid_map, penalties=penalties, agents=agents, fov=fov, t=0)
