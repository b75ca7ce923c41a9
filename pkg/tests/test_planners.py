from collections import Counter

import numpy as np
import pytest

from vpm_sdk.core.config import VPMConfig
from vpm_sdk.core.exceptions import PolicyError
from vpm_sdk.core.factories import Policy, PolicyFactory, register_policy
from vpm_sdk.core.models import Action, AgentState
from vpm_sdk.world.gridworld import apply_action, step
from vpm_sdk.world.maps import open_map
from vpm_sdk.planners.gcs import Assignment, GCSPolicy, gcs_select_candidates, gcs_step
from vpm_sdk.planners.random_policy import RandomPolicy, random_policy
from vpm_sdk.planners.routing import Tour
from vpm_sdk.planners.tspc import TSPCPolicy, monitoring_tour, tspc_offsets, tspc_policy


def _world_with(make_world, grid_map, positions, values, fov=1):
    return make_world(grid_map, positions, fov=fov).with_penalties(np.asarray(values, dtype=np.float64))


def _ring_tour(side=11):
    """Perimeter of a side x side square, clockwise from the top-left corner."""
    top = [(0, c) for c in range(side)]
    right = [(r, side - 1) for r in range(1, side)]
    bottom = [(side - 1, c) for c in range(side - 2, -1, -1)]
    left = [(r, 0) for r in range(side - 2, 0, -1)]
    cycle = top + right + bottom + left
    return Tour(points=[cycle[0]], cycle=cycle, length=len(cycle))


class TestCandidates:

    def test_no_penalties(self, open_10, make_world):
        world = make_world(open_10, [(0, 0)])
        assert gcs_select_candidates(world, 12) == []

    def test_suppression(self, make_world):
        grid_map = open_map(1, 5)
        world = _world_with(make_world, grid_map, [(0, 0)], [[0, -5, -3, 0, 0]])
        assert gcs_select_candidates(world, 2) == [(0, 1)]

    def test_cluster_maxima(self, open_10, make_world):
        values = np.zeros((10, 10))
        for (r, c), peak in (((1, 1), 40), ((1, 8), 30), ((8, 1), 20), ((8, 8), 10)):
            values[r - 1:r + 2, c - 1:c + 2] = -5.0
            values[r, c] = -peak
        world = _world_with(make_world, open_10, [(5, 5)], values)
        assert gcs_select_candidates(world, 3) == [(1, 1), (1, 8), (8, 1), (8, 8)]

    def test_equal_magnitudes_in_row_major_order(self, open_10, make_world):
        values = np.zeros((10, 10))
        values[7, 2] = values[2, 7] = values[2, 1] = -9.0
        world = _world_with(make_world, open_10, [(5, 5)], values)
        assert gcs_select_candidates(world, 1) == [(2, 1), (2, 7), (7, 2)]


class TestGCSStep:

    def test_walks_to_target_then_reassigns(self, make_world):
        corridor = open_map(1, 7)
        values = np.zeros((1, 7))
        values[0, 3] = -5.0
        world = _world_with(make_world, corridor, [(0, 0)], values)

        assignment = Assignment.empty(1)
        for _ in range(3):
            joint, assignment = gcs_step(world, assignment, 12)
            assert joint == [Action.RIGHT]
            assert assignment.targets == [(0, 3)]
            world, _ = step(world, joint)
        assert world.positions == [(0, 3)]

        joint, assignment = gcs_step(world, assignment, 12)
        assert assignment.targets == [(0, 0)]
        assert joint == [Action.LEFT]

    def test_single_candidate_goes_to_lower_id(self, make_world):
        corridor = open_map(1, 5)
        world = _world_with(make_world, corridor, [(0, 0), (0, 4)], [[0, 0, -7, 0, 0]])
        joint, assignment = gcs_step(world, Assignment.empty(2), 12)
        assert assignment.targets == [(0, 2), None]
        assert joint == [Action.RIGHT, Action.STAY]

    def test_target_reset_en_route(self, make_world):
        corridor = open_map(1, 9)
        values = np.zeros((1, 9))
        values[0, 8] = -50.0
        world = _world_with(make_world, corridor, [(0, 4)], values)
        joint, assignment = gcs_step(world, Assignment.empty(1), 12)
        assert joint == [Action.RIGHT]
        world, _ = step(world, joint)

        # someone else looked at the target
        values = world.penalties.values.copy()
        values[0, 8] = 0.0
        values[0, 0] = -100.0
        world = world.with_penalties(values)
        joint, assignment = gcs_step(world, assignment, 12)
        assert assignment.targets == [(0, 0)]
        assert joint == [Action.LEFT]

    def test_does_not_mutate_assignment(self, make_world):
        corridor = open_map(1, 5)
        world = _world_with(make_world, corridor, [(0, 0)], [[0, 0, 0, 0, -3]])
        _, first = gcs_step(world, Assignment.empty(1), 12)
        before = first.copy()
        gcs_step(world, first, 12)
        assert first.targets == before.targets
        assert first.paths == before.paths

    def test_policy_from_factory(self):
        policy = PolicyFactory.create("gcs:5", VPMConfig())
        assert isinstance(policy, GCSPolicy)
        assert policy.d_min == 5.0
        assert PolicyFactory.create("gcs", VPMConfig()).d_min == 12.0


class TestTSPC:

    def test_offsets(self):
        tour = _ring_tour()
        assert len(tour.cycle) == 40
        assert tspc_offsets(tour, 3) == [0, 13, 26]
        assert tspc_offsets(tour, 2) == [0, 20]

    def test_single_agent_loops(self):
        tour = _ring_tour()
        grid_map = open_map(11, 11)
        agent = AgentState(0, tour.cycle[0])
        stream = tspc_policy(tour, 1)
        visited = []
        for _ in range(40):
            agent = apply_action(agent, next(stream)[0], grid_map)
            visited.append(agent.position)
        assert agent.position == tour.cycle[0]
        assert set(visited) == set(tour.cycle)

    def test_two_agents_keep_spacing(self):
        tour = _ring_tour()
        grid_map = open_map(11, 11)
        agents = [AgentState(i, tour.cell_at(o)) for i, o in enumerate(tspc_offsets(tour, 2))]
        stream = tspc_policy(tour, 2)
        for _ in range(100):
            joint = next(stream)
            agents = [apply_action(a, action, grid_map) for a, action in zip(agents, joint)]
            gap = (tour.cycle.index(agents[1].position) - tour.cycle.index(agents[0].position)) % 40
            assert gap == 20

    def test_policy_places_agents_on_offsets(self, rng):
        grid_map = open_map(20, 20)
        policy = TSPCPolicy()
        starts = policy.initial_positions(grid_map, 3, 11, rng)
        tour = monitoring_tour(grid_map, 11)
        assert starts == [tour.cell_at(o) for o in tspc_offsets(tour, 3)]

    def test_off_tour_agent_walks_to_its_slot(self, make_world, rng):
        grid_map = open_map(20, 20)
        tour = monitoring_tour(grid_map, 11)
        slot = tour.cell_at(0)
        start = (19, 19) if slot != (19, 19) else (0, 0)
        world = make_world(grid_map, [start], fov=11)
        policy = TSPCPolicy()
        policy.reset(world, rng)
        for _ in range(60):
            world, _ = step(world, policy.act(world, rng))
        assert world.positions[0] in tour.cycle
        assert policy.joined == [True]


class TestRandom:

    def test_seeded(self):
        first, second = np.random.default_rng(9), np.random.default_rng(9)
        a = [random_policy(3, first) for _ in range(20)]
        b = [random_policy(3, second) for _ in range(20)]
        assert a == b

    def test_uniform_frequencies(self, rng):
        counts = Counter(random_policy(100000, rng))
        for action in Action:
            assert abs(counts[action] / 100000 - 0.2) < 0.01

    def test_no_agents(self, rng):
        assert random_policy(0, rng) == []

    def test_policy_wrapper(self, open_10, make_world, rng):
        world = make_world(open_10, [(0, 0), (5, 5)])
        joint = RandomPolicy().act(world, rng)
        assert len(joint) == 2
        assert all(isinstance(a, Action) for a in joint)


class TestFactory:

    def test_unknown_kind(self):
        with pytest.raises(PolicyError):
            PolicyFactory.create("teleport", VPMConfig())

    def test_builtins(self):
        PolicyFactory.create("random", VPMConfig())
        for kind in ("random", "gcs", "tspc", "net"):
            assert kind in PolicyFactory.list_registered()

    def test_register_decorator(self, open_5, make_world, rng):

        @register_policy("always_stay")
        class StayPolicy(Policy):
            name = "always_stay"

            def __init__(self, config=None, argument=None):
                pass

            def act(self, world, rng):
                return [Action.STAY] * world.n_agents

        policy = PolicyFactory.create("always_stay", VPMConfig())
        world = make_world(open_5, [(1, 1)])
        assert policy.act(world, rng) == [Action.STAY]
        assert policy.initial_positions(open_5, 1, 3, rng) is None

    def test_net_requires_checkpoint(self):
        with pytest.raises(PolicyError):
            PolicyFactory.create("net", VPMConfig())
