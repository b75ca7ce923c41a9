"""
Bundled map catalogue, map generators and world construction from config.
"""

from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.config import EnvironmentConfig
from ..core.exceptions import MapFormatError
from ..core.models import Cell, GridMap, WorldState
from .gridworld import load_map_file, reset_world

MAPS_DIR = Path(__file__).resolve().parent.parent / 'maps'


def list_maps() -> List[str]:
    """Names of the bundled maps."""
    return sorted(path.stem for path in MAPS_DIR.glob('*.txt'))


@lru_cache(maxsize=64)
def _load(name_or_path: str) -> Tuple[GridMap, Tuple[Cell, ...]]:
    bundled = MAPS_DIR / f"{name_or_path}.txt"
    if bundled.exists():
        grid_map, starts = load_map_file(bundled)
        return grid_map, tuple(starts)

    path = Path(name_or_path)
    if path.is_file():
        grid_map, starts = load_map_file(path)
        return grid_map, tuple(starts)

    raise MapFormatError(
        f"Unknown map: {name_or_path}",
        details={'bundled': list_maps()}
    )


def resolve_map(name_or_path: Union[str, Path]) -> Tuple[GridMap, List[Cell]]:
    """Load a bundled map by name, or any map file by path."""
    grid_map, starts = _load(str(name_or_path))
    return grid_map, list(starts)


def world_from_config(
    env: EnvironmentConfig,
    rng: np.random.Generator,
    map_name: Optional[str] = None,
    n_agents: Optional[int] = None,
    positions: Optional[Sequence[Cell]] = None,
) -> WorldState:
    """
    Fresh world for one episode.

    Explicit ``positions`` win; otherwise the map's declared starts are used
    unless ``env.random_starts`` is set or there are too few of them.
    """
    grid_map, starts = resolve_map(map_name or env.map)
    if positions is not None:
        starts = list(positions)
    elif env.random_starts:
        starts = None
    return reset_world(
        grid_map,
        n_agents or env.n_agents,
        env.fov,
        decay_rate=env.decay_rate,
        r_max=env.r_max,
        starts=starts,
        rng=rng,
        coverage_mode=env.coverage_mode,
    )


def open_map(height: int, width: int) -> GridMap:
    """Obstacle-free map."""
    return GridMap(obstacles=np.zeros((height, width), dtype=bool), name=f"open_{height}x{width}")


def generate_random_map(
    height: int,
    width: int,
    density: float,
    rng: np.random.Generator,
    name: str = "random",
) -> GridMap:
    """
    Map with each cell an obstacle independently with probability ``density``.

    At least one cell is always left free.
    """
    if not 0.0 <= density < 1.0:
        raise MapFormatError(f"Obstacle density must lie in [0, 1): {density}")
    obstacles = rng.random((height, width)) < density
    if obstacles.all():
        obstacles[rng.integers(height), rng.integers(width)] = False
    return GridMap(obstacles=obstacles, name=name)
