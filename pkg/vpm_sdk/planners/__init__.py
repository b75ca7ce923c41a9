"""Non-learning baselines: random, greedy centralized search and TSP-cyclic."""

from .gcs import GCSPolicy, gcs_step
from .random_policy import RandomPolicy, random_policy
from .routing import guard_points, shortest_path, tsp_tour
from .tspc import TSPCPolicy, tspc_policy

__all__ = [
    'GCSPolicy',
    'gcs_step',
    'RandomPolicy',
    'random_policy',
    'guard_points',
    'shortest_path',
    'tsp_tour',
    'TSPCPolicy',
    'tspc_policy',
]
