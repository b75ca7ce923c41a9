"""Grid world dynamics, visibility and bundled maps."""

from .gridworld import load_map, load_map_file, reset_world, step, step_detailed
from .visibility import VisibilityIndex, joint_visibility, line_of_sight, visible_cells
from .maps import generate_random_map, list_maps, resolve_map, world_from_config

__all__ = [
    'load_map',
    'load_map_file',
    'reset_world',
    'step',
    'step_detailed',
    'VisibilityIndex',
    'joint_visibility',
    'line_of_sight',
    'visible_cells',
    'generate_random_map',
    'list_maps',
    'resolve_map',
    'world_from_config',
]
