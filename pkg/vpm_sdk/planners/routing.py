"""
Routing primitives shared by the baselines: BFS shortest paths on the
4-connected grid, greedy guard-point cover and the cyclic TSP tour.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..core.exceptions import InvalidStateError, NoPathError
from ..core.models import Action, Cell, GridMap
from ..utils.logging import get_logger, log_performance
from ..world.visibility import VisibilityIndex

logger = get_logger(__name__)

# Expansion order fixes tie-breaking between equal-length paths.
NEIGHBOR_ORDER = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)

UNREACHABLE = -1


def _neighbors(grid_map: GridMap, cell: Cell):
    for action in NEIGHBOR_ORDER:
        dr, dc = action.delta
        nxt = (cell[0] + dr, cell[1] + dc)
        if grid_map.is_free(nxt):
            yield nxt


def _check_free(grid_map: GridMap, cell: Cell) -> None:
    if not grid_map.is_free(cell):
        raise InvalidStateError(f"Cell {cell} is not a free map cell", {'cell': cell})


def shortest_path(grid_map: GridMap, start: Cell, goal: Cell) -> Optional[List[Cell]]:
    """
    Minimum-step path from ``start`` to ``goal``.

    Returns the cells after ``start`` up to and including ``goal`` (empty when
    they coincide), or None when ``goal`` is unreachable.
    """
    _check_free(grid_map, start)
    _check_free(grid_map, goal)
    start, goal = tuple(start), tuple(goal)
    if start == goal:
        return []

    parent = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for nxt in _neighbors(grid_map, cell):
            if nxt in parent:
                continue
            parent[nxt] = cell
            if nxt == goal:
                path = [goal]
                while parent[path[-1]] != start:
                    path.append(parent[path[-1]])
                return path[::-1]
            queue.append(nxt)
    return None


def distance_field(grid_map: GridMap, source: Cell) -> np.ndarray:
    """BFS step counts from ``source``; UNREACHABLE where no path exists."""
    _check_free(grid_map, source)
    dist = np.full(grid_map.shape, UNREACHABLE, dtype=np.int64)
    dist[source] = 0
    queue = deque([tuple(source)])
    while queue:
        cell = queue.popleft()
        for nxt in _neighbors(grid_map, cell):
            if dist[nxt] == UNREACHABLE:
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    return dist


@log_performance
def guard_points(grid_map: GridMap, fov: int) -> List[Cell]:
    """
    Greedy set cover of the free cells by field-of-view masks.

    Each round picks the free cell that sees the most still-uncovered free
    cells; ties go to the first cell in row-major order.
    """
    index = VisibilityIndex.get(grid_map, fov)
    cover = index.coverage_matrix()
    free = grid_map.free_cells()

    uncovered = np.ones(len(free), dtype=bool)
    picked: List[Cell] = []
    while uncovered.any():
        gains = cover[:, uncovered].sum(axis=1)
        best = int(np.argmax(gains))
        picked.append(free[best])
        uncovered &= ~cover[best]

    logger.debug(f"Guard cover of {grid_map.name} with fov {fov}: {len(picked)} points")
    return picked


def tour_length(order: Sequence[int], dist: np.ndarray) -> int:
    """Closed tour length over a distance matrix."""
    n = len(order)
    return int(sum(dist[order[i], order[(i + 1) % n]] for i in range(n)))


def nearest_neighbor_order(dist: np.ndarray) -> List[int]:
    """Greedy tour from point 0; ties go to the lower index."""
    n = dist.shape[0]
    order = [0]
    remaining = set(range(1, n))
    while remaining:
        last = order[-1]
        nxt = min(remaining, key=lambda j: (dist[last, j], j))
        order.append(nxt)
        remaining.remove(nxt)
    return order


def two_opt(order: List[int], dist: np.ndarray) -> List[int]:
    """
    First-improvement 2-opt with position 0 fixed.

    Reversing ``order[i..k]`` swaps edges (i-1, i) and (k, k+1) for
    (i-1, k) and (i, k+1). Stops when no single move shortens the tour.
    """
    tour = list(order)
    n = len(tour)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for k in range(i + 1, n):
                a, b = tour[i - 1], tour[i]
                c, d = tour[k], tour[(k + 1) % n]
                delta = dist[a, c] + dist[b, d] - dist[a, b] - dist[c, d]
                if delta < 0:
                    tour[i:k + 1] = reversed(tour[i:k + 1])
                    improved = True
    return tour


@dataclass
class Tour:
    """Closed tour through guard points, stitched into a cell cycle."""

    points: List[Cell]
    cycle: List[Cell]  # cycle[i + 1] is adjacent to cycle[i]; wraps to cycle[0]
    length: int
    nearest_neighbor_length: int = 0
    order: List[int] = field(default_factory=list)

    @property
    def period(self) -> int:
        """Steps for one lap; a single-cell tour has period 1."""
        return max(self.length, 1)

    def cell_at(self, index: int) -> Cell:
        return self.cycle[index % len(self.cycle)]


def point_distances(grid_map: GridMap, points: Sequence[Cell]) -> np.ndarray:
    """Pairwise shortest-path lengths; raises NoPathError if any pair is disconnected."""
    n = len(points)
    dist = np.zeros((n, n), dtype=np.int64)
    for i, point in enumerate(points):
        field_i = distance_field(grid_map, point)
        for j, other in enumerate(points):
            d = field_i[other]
            if d == UNREACHABLE:
                raise NoPathError(
                    f"Tour points {point} and {other} are not connected",
                    start=point,
                    goal=other
                )
            dist[i, j] = d
    return dist


@log_performance
def tsp_tour(points: Sequence[Cell], grid_map: GridMap) -> Tour:
    """Nearest-neighbor tour from the first point improved by 2-opt."""
    points = [tuple(p) for p in points]
    if not points:
        raise InvalidStateError("A tour needs at least one point")
    if len(points) == 1:
        _check_free(grid_map, points[0])
        return Tour(points=points, cycle=[points[0]], length=0, order=[0])

    dist = point_distances(grid_map, points)
    nn_order = nearest_neighbor_order(dist)
    order = two_opt(nn_order, dist)

    ordered = [points[i] for i in order]
    cycle = [ordered[0]]
    for i in range(len(ordered)):
        leg = shortest_path(grid_map, ordered[i], ordered[(i + 1) % len(ordered)])
        cycle.extend(leg)
    if len(cycle) > 1:
        cycle.pop()  # the closing leg ends back on ordered[0]

    length = tour_length(order, dist)
    logger.debug(
        f"Tour over {len(points)} points: length {length} "
        f"(nearest neighbor {tour_length(nn_order, dist)})"
    )
    return Tour(
        points=ordered,
        cycle=cycle,
        length=length,
        nearest_neighbor_length=tour_length(nn_order, dist),
        order=order,
    )
