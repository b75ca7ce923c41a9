"""
Tools for inspecting the periodic structure of monitoring trajectories.
"""

import math
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.exceptions import AnalysisError
from ..core.models import GridMap, TrajectoryLog
from ..world.maps import resolve_map

DEFAULT_THRESHOLD = 0.8
# a lag this close to the best coefficient counts as a tie; ties go to the
# shortest lag so that harmonics do not beat the fundamental period
TIE_TOLERANCE = 1e-6


def detect_period(
    series: Sequence[float],
    threshold: float = DEFAULT_THRESHOLD,
) -> Optional[int]:
    """
    Lag in [2, len/2] with the highest autocorrelation, if it reaches
    ``threshold``; None otherwise, including for constant series.
    """
    values = pd.Series(np.asarray(series, dtype=np.float64))
    if len(values) < 4:
        raise AnalysisError(f"Period detection needs at least 4 samples, got {len(values)}")
    if values.nunique() == 1:
        return None

    lags = range(2, len(values) // 2 + 1)
    coefficients = np.array([values.autocorr(lag) for lag in lags])
    coefficients = np.where(np.isfinite(coefficients), coefficients, -np.inf)
    best = coefficients.max()
    if best < threshold:
        return None
    return int(lags[int(np.argmax(coefficients >= best - TIE_TOLERANCE))])


def phase_difference(a: Sequence[float], b: Sequence[float], period: int) -> int:
    """
    Shift s in [0, period) maximizing the correlation of a(t) with b(t + s).

    Each shift is scored on the overlap a[:n - s] against b[s:]; the series
    are not wrapped around, so larger shifts use fewer samples. A ``b`` that
    lags ``a`` by k steps gives k mod period.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if int(period) != period or period < 1:
        raise AnalysisError(f"Period must be a positive integer: {period}")
    period = int(period)
    if len(a) != len(b):
        raise AnalysisError(f"Series lengths differ: {len(a)} and {len(b)}")
    if len(a) < 2 * period:
        raise AnalysisError(
            f"Series of length {len(a)} are too short for period {period}",
            {'required': 2 * period}
        )

    n = len(a)
    scores = np.full(period, -np.inf)
    for shift in range(period):
        x, y = a[:n - shift], b[shift:]
        x, y = x - x.mean(), y - y.mean()
        denom = math.sqrt(float((x * x).sum()) * float((y * y).sum()))
        if denom > 0:
            scores[shift] = float((x * y).sum()) / denom
    return int(np.argmax(scores)) if np.isfinite(scores).any() else 0


def map_center(grid_map: GridMap) -> Tuple[float, float]:
    return (grid_map.height - 1) / 2.0, (grid_map.width - 1) / 2.0


def polar_series(
    log: TrajectoryLog,
    agent: int,
    center: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    """
    sin(theta_t) of one agent's position around ``center``, where
    theta_t = atan2(row - center_row, col - center_col).

    ``center`` defaults to the center of the map named in the log metadata.
    At the exact center the previous angle is held (0 at the first step).
    """
    if center is None:
        map_name = log.metadata.get('map')
        if not map_name:
            raise AnalysisError("Log names no map; pass the center explicitly")
        center = map_center(resolve_map(map_name)[0])
    rows = log.agent_series(agent, axis=0)
    cols = log.agent_series(agent, axis=1)
    center_row, center_col = center

    theta = 0.0
    out = np.empty(len(rows), dtype=np.float64)
    for t, (r, c) in enumerate(zip(rows, cols)):
        dy, dx = r - center_row, c - center_col
        if dy != 0 or dx != 0:
            theta = math.atan2(dy, dx)
        out[t] = math.sin(theta)
    return out
