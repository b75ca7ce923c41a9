"""
Occlusion-aware square field of view.

Rays are exact supercover segments between cell centers: every cell whose
closed square the segment touches, corners included, lies on the ray. The
touched set depends only on the segment, so visibility is symmetric.
Only obstacles occlude; agents are transparent.
"""

import threading
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..core.exceptions import InvalidStateError, VisibilityError
from ..core.models import Cell, GridMap
from ..utils.logging import get_logger

logger = get_logger(__name__)


def validate_fov(fov: int) -> int:
    """Side length must be odd and at least 1."""
    if int(fov) != fov or fov < 1 or fov % 2 == 0:
        raise VisibilityError(f"Field of view must be odd and positive: {fov}", {'fov': fov})
    return int(fov)


@lru_cache(maxsize=None)
def ray_offsets(dr: int, dc: int) -> Tuple[Cell, ...]:
    """
    Offsets strictly between the viewer (0, 0) and the target (dr, dc).

    Works in doubled coordinates so every test is integer arithmetic: cell
    (i, j) spans corners (2i +/- 1, 2j +/- 1) and the segment runs from the
    origin to (2dr, 2dc). A cell is touched unless all four corners lie
    strictly on the same side of the line.
    """
    if max(abs(dr), abs(dc)) <= 1:
        return ()

    cells = []
    for i in range(min(0, dr), max(0, dr) + 1):
        for j in range(min(0, dc), max(0, dc) + 1):
            if (i, j) == (0, 0) or (i, j) == (dr, dc):
                continue
            sides = [
                dr * (2 * j + sj) - dc * (2 * i + si)
                for si in (-1, 1) for sj in (-1, 1)
            ]
            if max(sides) < 0 or min(sides) > 0:
                continue
            cells.append((i, j))
    return tuple(cells)


def _check_cell(grid_map: GridMap, cell: Cell) -> None:
    if not grid_map.in_bounds(cell):
        raise InvalidStateError(
            f"Cell {cell} is outside the {grid_map.height}x{grid_map.width} map",
            {'cell': cell}
        )


def line_of_sight(grid_map: GridMap, a: Cell, b: Cell) -> bool:
    """True iff no obstacle lies strictly between ``a`` and ``b``."""
    _check_cell(grid_map, a)
    _check_cell(grid_map, b)
    obstacles = grid_map.obstacles
    for i, j in ray_offsets(b[0] - a[0], b[1] - a[1]):
        if obstacles[a[0] + i, a[1] + j]:
            return False
    return True


class VisibilityIndex:
    """
    Precomputed visibility for one (map, fov) pair.

    ``table[k, r, c]`` tells whether a viewer at (r, c) sees the cell at
    window offset ``offsets[k]`` from it. Instances are shared through
    ``VisibilityIndex.get`` and never mutated after construction.
    """

    _cache: Dict[Tuple[bytes, int], 'VisibilityIndex'] = {}
    _lock = threading.Lock()
    _max_cached = 32

    def __init__(self, grid_map: GridMap, fov: int):
        self.fov = validate_fov(fov)
        self.radius = self.fov // 2
        self.shape = grid_map.shape

        h = self.radius
        span = np.arange(-h, h + 1)
        dr, dc = np.meshgrid(span, span, indexing='ij')
        self.offsets = np.stack([dr.ravel(), dc.ravel()], axis=1)
        self.table = self._build(grid_map)
        self._coverage = None
        self._free_mask = grid_map.free_mask

    @classmethod
    def get(cls, grid_map: GridMap, fov: int) -> 'VisibilityIndex':
        """Cached index for this map content and field of view."""
        key = (grid_map.key(), int(fov))
        with cls._lock:
            index = cls._cache.get(key)
        if index is None:
            index = cls(grid_map, fov)
            with cls._lock:
                if len(cls._cache) >= cls._max_cached:
                    cls._cache.pop(next(iter(cls._cache)))
                cls._cache[key] = index
        return index

    def _build(self, grid_map: GridMap) -> np.ndarray:
        height, width = self.shape
        h = self.radius
        # Padding keeps every shifted slice inside the array; padded cells
        # are never read for in-map targets.
        padded = np.pad(grid_map.obstacles, h, constant_values=False)
        inside = np.pad(np.ones(self.shape, dtype=bool), h, constant_values=False)

        def shifted(array: np.ndarray, i: int, j: int) -> np.ndarray:
            return array[h + i:h + i + height, h + j:h + j + width]

        table = np.empty((len(self.offsets), height, width), dtype=bool)
        for k, (dr, dc) in enumerate(self.offsets):
            blocked = np.zeros(self.shape, dtype=bool)
            for i, j in ray_offsets(int(dr), int(dc)):
                blocked |= shifted(padded, i, j)
            table[k] = shifted(inside, int(dr), int(dc)) & ~blocked

        logger.debug(
            f"Built visibility index for {height}x{width} map, fov {self.fov}"
        )
        return table

    def mask(self, pos: Cell) -> np.ndarray:
        """Visibility mask of a single viewer."""
        r, c = pos
        hits = self.table[:, r, c]
        mask = np.zeros(self.shape, dtype=bool)
        targets = self.offsets[hits]
        mask[r + targets[:, 0], c + targets[:, 1]] = True
        return mask

    def joint_mask(self, positions: Sequence[Cell]) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for pos in positions:
            mask |= self.mask(pos)
        return mask

    def coverage_matrix(self) -> np.ndarray:
        """
        ``cover[v, t]``: free cell number v sees free cell number t.

        Free cells are numbered in row-major order.
        """
        if self._coverage is None:
            flat_index = np.full(self.shape, -1, dtype=np.int64)
            rows, cols = np.nonzero(self._free_mask)
            flat_index[rows, cols] = np.arange(len(rows))

            cover = np.zeros((len(rows), len(rows)), dtype=bool)
            for k, (dr, dc) in enumerate(self.offsets):
                sees = self.table[k, rows, cols]
                tr = rows + dr
                tc = cols + dc
                valid = sees & (tr >= 0) & (tr < self.shape[0]) & (tc >= 0) & (tc < self.shape[1])
                viewers = np.nonzero(valid)[0]
                targets = flat_index[tr[valid], tc[valid]]
                keep = targets >= 0
                cover[viewers[keep], targets[keep]] = True
            self._coverage = cover
        return self._coverage


def visible_cells(grid_map: GridMap, pos: Cell, fov: int) -> np.ndarray:
    """Cells inside the fov window around ``pos`` with line of sight from it."""
    validate_fov(fov)
    _check_cell(grid_map, pos)
    if not grid_map.is_free(pos):
        raise InvalidStateError(f"Viewer {pos} is not on a free cell", {'cell': pos})
    return VisibilityIndex.get(grid_map, fov).mask(pos)


def joint_visibility(grid_map: GridMap, positions: Sequence[Cell], fov: int) -> np.ndarray:
    """Cellwise OR of every agent's visible cells."""
    validate_fov(fov)
    if not positions:
        return np.zeros(grid_map.shape, dtype=bool)
    for pos in positions:
        _check_cell(grid_map, pos)
    return VisibilityIndex.get(grid_map, fov).joint_mask(positions)


def window_cells(grid_map: GridMap, pos: Cell, fov: int) -> List[Cell]:
    """All in-map cells of the fov window around ``pos``, row-major."""
    h = validate_fov(fov) // 2
    r0, c0 = pos
    return [
        (r, c)
        for r in range(max(0, r0 - h), min(grid_map.height, r0 + h + 1))
        for c in range(max(0, c0 - h), min(grid_map.width, c0 + h + 1))
    ]
