"""
Per-agent observations: the ego-centric local map and the global mini-map.

Raw grids use two codes on top of penalty magnitudes: OBSTACLE_CODE for walls,
off-map padding and anything the agent cannot see, AGENT_CODE for agents.
Network inputs are normalized from the cell kinds, not the raw values, since
a raw penalty can equal a code.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from ..core.exceptions import ObservationError
from ..core.models import ObservationMode, WorldState
from ..utils.logging import get_logger
from ..world.visibility import visible_cells

logger = get_logger(__name__)

OBSTACLE_CODE = 150
AGENT_CODE = 200

# Cell kinds
PENALTY = 0
OBSTACLE = 1
AGENT = 2

# Normalized levels: OBSTACLE_CODE / 400 and AGENT_CODE / 400. Penalties map to
# |R| / (2 r_max) in [0, 0.5], so a penalty above 0.75 r_max shares a level with
# a wall. Kinds keep the raw grids unambiguous.
OBSTACLE_LEVEL = 0.375
AGENT_LEVEL = 0.5


def normalization_constants() -> Dict[str, float]:
    """Constants a trained network depends on (stored in checkpoints)."""
    return {
        'obstacle_code': OBSTACLE_CODE,
        'agent_code': AGENT_CODE,
        'penalty_scale': 0.5,
        'obstacle_level': OBSTACLE_LEVEL,
        'agent_level': AGENT_LEVEL,
    }


def normalize_penalty(magnitude, r_max: float):
    """Penalty magnitude in [0, r_max] to [0, 0.5]."""
    return np.asarray(magnitude, dtype=np.float64) / (2.0 * r_max)


@dataclass
class Observation:
    """Raw grids of one agent plus the normalized network input."""

    agent_id: int
    mode: ObservationMode
    data: np.ndarray  # (channels, size, size), normalized
    local: Optional[np.ndarray] = None
    mini: Optional[np.ndarray] = None

    @property
    def channels(self) -> int:
        return self.data.shape[0]


def _check_agent(state: WorldState, agent_id: int) -> None:
    if not 0 <= agent_id < state.n_agents:
        raise ObservationError(
            f"Invalid agent id: {agent_id}",
            {'n_agents': state.n_agents}
        )


def _check_size(size: int) -> int:
    if size < 1 or size % 2 == 0:
        raise ObservationError(f"Observation size must be odd and positive: {size}")
    return int(size)


def _local_grids(state: WorldState, agent_id: int, size: int) -> Tuple[np.ndarray, np.ndarray]:
    _check_agent(state, agent_id)
    size = _check_size(size)
    grid_map = state.map
    position = state.agents[agent_id].position

    visible = visible_cells(grid_map, position, state.fov)
    kinds = np.full(grid_map.shape, OBSTACLE, dtype=np.int8)
    kinds[visible & grid_map.free_mask] = PENALTY
    for other in state.agents:
        if visible[other.position]:
            kinds[other.position] = AGENT

    h = size // 2
    padded = np.pad(kinds, h, constant_values=OBSTACLE)
    magnitude = np.pad(state.penalties.magnitude(), h, constant_values=0.0)
    r, c = position
    window_kinds = padded[r:r + size, c:c + size].copy()
    window_kinds[h, h] = AGENT
    window_values = magnitude[r:r + size, c:c + size]
    return window_kinds, window_values


def _mini_grids(state: WorldState, agent_id: int, size: int) -> Tuple[np.ndarray, np.ndarray]:
    _check_agent(state, agent_id)
    height, width = state.map.shape
    if size < 1 or height % size or width % size:
        raise ObservationError(
            f"Map {height}x{width} is not divisible into a {size}x{size} mini-map",
            {'map_shape': (height, width), 'size': size}
        )
    bh, bw = height // size, width // size

    obstacle_blocks = state.map.obstacles.reshape(size, bh, size, bw).any(axis=(1, 3))
    values = state.penalties.magnitude().reshape(size, bh, size, bw).max(axis=(1, 3))

    kinds = np.full((size, size), PENALTY, dtype=np.int8)
    r, c = state.agents[agent_id].position
    kinds[r // bh, c // bw] = AGENT
    kinds[obstacle_blocks] = OBSTACLE
    return kinds, values


def _raw(kinds: np.ndarray, values: np.ndarray) -> np.ndarray:
    raw = np.where(kinds == PENALTY, values, 0.0)
    raw[kinds == OBSTACLE] = OBSTACLE_CODE
    raw[kinds == AGENT] = AGENT_CODE
    return raw


def _normalized(kinds: np.ndarray, values: np.ndarray, r_max: float) -> np.ndarray:
    data = np.where(kinds == PENALTY, normalize_penalty(values, r_max), 0.0)
    data[kinds == OBSTACLE] = OBSTACLE_LEVEL
    data[kinds == AGENT] = AGENT_LEVEL
    return data


def render_local(state: WorldState, agent_id: int, size: int = 25) -> np.ndarray:
    """
    Ego-centric ``size`` x ``size`` window with the agent at the center.

    Cells off the map, outside the field of view or occluded render as
    OBSTACLE_CODE; visible agents as AGENT_CODE; other visible free cells as
    their penalty magnitude.
    """
    return _raw(*_local_grids(state, agent_id, size))


def render_mini(state: WorldState, agent_id: int, size: int = 25) -> np.ndarray:
    """
    Whole map downsampled to ``size`` x ``size`` blocks.

    A block with any obstacle is OBSTACLE_CODE, else AGENT_CODE if it holds
    this agent, else the largest penalty magnitude in the block. Other agents
    are not drawn.
    """
    return _raw(*_mini_grids(state, agent_id, size))


def make_observation(
    state: WorldState,
    agent_id: int,
    mode: Union[ObservationMode, str] = ObservationMode.BOTH,
    size: int = 25,
) -> Observation:
    """Assemble the requested channels (local first) and normalize them."""
    try:
        mode = ObservationMode(mode)
    except ValueError:
        raise ObservationError(f"Unsupported observation mode: {mode}")

    r_max = state.penalties.r_max
    channels = []
    local = mini = None
    if mode in (ObservationMode.LOCAL, ObservationMode.BOTH):
        kinds, values = _local_grids(state, agent_id, size)
        local = _raw(kinds, values)
        channels.append(_normalized(kinds, values, r_max))
    if mode in (ObservationMode.MINI, ObservationMode.BOTH):
        kinds, values = _mini_grids(state, agent_id, size)
        mini = _raw(kinds, values)
        channels.append(_normalized(kinds, values, r_max))

    return Observation(
        agent_id=agent_id,
        mode=mode,
        data=np.stack(channels).astype(np.float64),
        local=local,
        mini=mini,
    )


def dump_observation(observation: Observation, directory: Union[str, Path], t: int, r_max: float) -> None:
    """Write the raw channels as PGM files ``t{t:05d}_a{id}_{channel}.pgm``."""
    from ..harness.images import write_pgm

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for channel, grid in (('local', observation.local), ('mini', observation.mini)):
        if grid is None:
            continue
        write_pgm(directory / f"t{t:05d}_a{observation.agent_id}_{channel}.pgm", grid, r_max)
