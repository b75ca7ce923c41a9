"""
Netpbm output: grayscale observation dumps (PGM) and trajectory trails (PPM).
"""

from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import InvalidStateError
from ..core.models import GridMap, TrajectoryLog
from ..observation.observations import AGENT_CODE

Color = Tuple[int, int, int]

OBSTACLE_COLOR: Color = (40, 40, 40)
BACKGROUND_COLOR: Color = (255, 255, 255)
AGENT_HUES: Sequence[Color] = (
    (230, 25, 75),
    (0, 130, 200),
    (60, 180, 75),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (128, 128, 0),
)
# trail cells never reach full hue, which is kept for final positions
TRAIL_MIN, TRAIL_MAX = 0.2, 0.7


def write_pgm(path: Union[str, Path], grid: np.ndarray, r_max: float) -> None:
    """
    Plain (P2) PGM of a raw observation grid.

    Gray levels are the raw codes, so maxval is max(r_max, agent code).
    """
    grid = np.rint(np.asarray(grid, dtype=np.float64)).astype(np.int64)
    maxval = int(max(np.ceil(r_max), AGENT_CODE))
    height, width = grid.shape
    lines = ["P2", f"{width} {height}", str(maxval)]
    lines.extend(' '.join(str(v) for v in row) for row in np.clip(grid, 0, maxval))
    Path(path).write_text('\n'.join(lines) + '\n')


def write_ppm(path: Union[str, Path], image: np.ndarray) -> None:
    """Binary (P6) PPM of an (H, W, 3) uint8 image."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidStateError(f"Expected an (H, W, 3) image, got {image.shape}")
    height, width, _ = image.shape
    header = f"P6\n{width} {height}\n255\n".encode('ascii')
    Path(path).write_bytes(header + image.tobytes())


def _blend(color: Color, weight: float) -> np.ndarray:
    base = np.asarray(BACKGROUND_COLOR, dtype=np.float64)
    return base + weight * (np.asarray(color, dtype=np.float64) - base)


def render_trail(log: TrajectoryLog, grid_map: GridMap, scale: int = 4) -> np.ndarray:
    """
    Trail image: obstacles dark, each cell tinted by the agent that visited
    it most (ties to the lower id) with intensity growing with its visit
    count, final positions in full hue.
    """
    height, width = grid_map.shape
    n_agents = log.n_agents
    counts = np.zeros((n_agents, height, width), dtype=np.int64)
    for step in log.positions:
        for agent, (r, c) in enumerate(step):
            counts[agent, r, c] += 1

    image = np.empty((height, width, 3), dtype=np.float64)
    image[:] = BACKGROUND_COLOR
    image[grid_map.obstacles] = OBSTACLE_COLOR

    if n_agents:
        owner = counts.argmax(axis=0)
        top = counts.max(axis=0)
        for agent in range(n_agents):
            hue = AGENT_HUES[agent % len(AGENT_HUES)]
            peak = counts[agent].max()
            cells = (owner == agent) & (top > 0)
            for r, c in zip(*np.nonzero(cells)):
                weight = TRAIL_MIN + (TRAIL_MAX - TRAIL_MIN) * counts[agent, r, c] / peak
                image[r, c] = _blend(hue, weight)
        for agent, (r, c) in enumerate(log.positions[-1]):
            image[r, c] = AGENT_HUES[agent % len(AGENT_HUES)]

    image = np.rint(image).astype(np.uint8)
    return np.repeat(np.repeat(image, scale, axis=0), scale, axis=1)


def emit_trail(
    log: TrajectoryLog,
    grid_map: GridMap,
    path: Union[str, Path],
    scale: int = 4,
) -> Path:
    """Write the trail image of ``log`` as a PPM file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_ppm(path, render_trail(log, grid_map, scale))
    return path


def read_pgm(path: Union[str, Path]) -> Tuple[np.ndarray, Optional[int]]:
    """Parse a P2 file written by :func:`write_pgm`; returns (grid, maxval)."""
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != 'P2':
        raise InvalidStateError(f"Not a plain PGM file: {path}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    values = np.array([int(v) for v in tokens[4:4 + width * height]], dtype=np.int64)
    return values.reshape(height, width), maxval
