import math
from pathlib import Path

import numpy as np
import pytest

from vpm_sdk.core.config import VPMConfig, load_config
from vpm_sdk.core.exceptions import AnalysisError, InvalidStateError, PolicyError
from vpm_sdk.core.factories import Policy, PolicyFactory
from vpm_sdk.core.models import Action, TrajectoryLog
from vpm_sdk.harness.analysis import detect_period, map_center, phase_difference, polar_series
from vpm_sdk.harness.experiment import COLUMNS, compare
from vpm_sdk.harness.images import (
    AGENT_HUES, BACKGROUND_COLOR, emit_trail, read_pgm, render_trail, write_ppm,
)
from vpm_sdk.harness.runner import load_log, run_episode, run_policy, save_log
from vpm_sdk.learning.trainer import train
from vpm_sdk.planners.random_policy import RandomPolicy
from vpm_sdk.planners.tspc import monitoring_tour
from vpm_sdk.world.maps import open_map, resolve_map

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


class StayPolicy(Policy):
    name = "stay"

    def act(self, world, rng):
        return [Action.STAY] * world.n_agents


class ShortPolicy(Policy):
    name = "short"

    def act(self, world, rng):
        return [Action.STAY] * (world.n_agents - 1)


class ExplodingPolicy(Policy):
    name = "explode"

    def __init__(self, config, argument=None):
        self.config = config

    def act(self, world, rng):
        raise RuntimeError("actuator fault")


def _tspc_config(steps):
    return VPMConfig.from_dict({
        'environment': {'map': 'open_20', 'n_agents': 2, 'fov': 11, 'steps': steps},
    })


def _open20_tour():
    grid_map, _ = resolve_map("open_20")
    return monitoring_tour(grid_map, 11)


def _ring_log(side=11, steps=120):
    top = [(0, c) for c in range(side)]
    right = [(r, side - 1) for r in range(1, side)]
    bottom = [(side - 1, c) for c in range(side - 2, -1, -1)]
    left = [(r, 0) for r in range(side - 2, 0, -1)]
    cycle = top + right + bottom + left
    return TrajectoryLog(positions=[(cycle[t % len(cycle)],) for t in range(steps + 1)])


class TestRunEpisode:

    def test_zero_steps(self, open_10, make_world, rng):
        world = make_world(open_10, [(1, 1), (8, 8)])
        log, total = run_episode(RandomPolicy(), world, 0, rng)
        assert log.positions == [((1, 1), (8, 8))]
        assert log.actions == [] and log.rewards == []
        assert total == 0.0

    def test_total_is_sum_of_rewards(self, open_10, make_world, rng):
        world = make_world(open_10, [(0, 0), (9, 9)], fov=3)
        log, total = run_episode(RandomPolicy(), world, 40, rng)
        assert len(log.positions) == 41
        assert len(log.actions) == 40
        assert total == pytest.approx(sum(abs(r) for r in log.rewards))
        assert total == pytest.approx(log.cumulative_penalty())

    def test_stationary_agent_closed_form(self, open_50, make_world, rng):
        world = make_world(open_50, [(25, 25)], fov=25)
        _, total = run_episode(StayPolicy(), world, 2000, rng)
        # 1875 unseen cells, each at -min(t, 400) after step t
        assert total == 1875 * (sum(range(1, 401)) + 1600 * 400)
        assert total == 1_350_375_000

    def test_negative_steps(self, open_10, make_world, rng):
        with pytest.raises(InvalidStateError):
            run_episode(StayPolicy(), make_world(open_10, [(0, 0)]), -1, rng)

    def test_action_count_checked(self, open_10, make_world, rng):
        with pytest.raises(PolicyError):
            run_episode(ShortPolicy(), make_world(open_10, [(0, 0), (1, 1)]), 3, rng)

    def test_record_visibility(self, open_10, make_world, rng):
        world = make_world(open_10, [(5, 5)], fov=3)
        log, _ = run_episode(StayPolicy(), world, 4, rng, record_visibility=True)
        assert len(log.visibility) == 4
        assert log.visibility[0].shape == (10, 10)
        assert log.visibility[0].sum() == 9

    def test_dump_observations(self, open_50, make_world, rng, tmp_path):
        world = make_world(open_50, [(0, 0), (30, 30)], fov=25)
        run_episode(StayPolicy(), world, 2, rng, dump_dir=tmp_path, obs_mode="both", obs_size=25)
        assert len(list(tmp_path.glob("*.pgm"))) == 2 * 2 * 2
        grid, maxval = read_pgm(tmp_path / "t00001_a1_local.pgm")
        assert grid.shape == (25, 25)
        assert maxval == 400


class TestRunPolicy:

    def test_reproducible(self, small_config):
        a, total_a = run_policy(small_config, "random", seed=4)
        b, total_b = run_policy(small_config, "random", seed=4)
        assert a.positions == b.positions
        assert total_a == total_b
        c, _ = run_policy(small_config, "random", seed=5)
        assert c.positions != a.positions

    def test_metadata(self, small_config):
        log, _ = run_policy(small_config, "gcs", seed=1, steps=5)
        assert log.metadata == {
            'map': 'open_10', 'policy': 'gcs', 'seed': 1, 'steps': 5,
            'n_agents': 2, 'fov': 5, 'n_train': 2,
        }

    def test_tspc_is_periodic(self):
        tour = _open20_tour()
        period = len(tour.cycle)
        log, _ = run_policy(_tspc_config(2 * period + 5), "tspc", seed=0)
        for t in range(period + 5):
            assert log.positions[t] == log.positions[t + period]

    def test_unknown_policy(self, small_config):
        with pytest.raises(PolicyError):
            run_policy(small_config, "teleport", seed=0)


class TestLogFile:

    def test_round_trip(self, small_config, tmp_path):
        log, _ = run_policy(small_config, "gcs", seed=2, steps=6)
        path = save_log(log, tmp_path / "logs" / "gcs.jsonl")
        loaded = load_log(path)
        assert loaded.positions == log.positions
        assert loaded.actions == log.actions
        assert loaded.rewards == log.rewards
        assert loaded.metadata == log.metadata

    def test_record_layout(self, small_config, tmp_path):
        log, _ = run_policy(small_config, "random", seed=2, steps=2)
        lines = save_log(log, tmp_path / "r.jsonl").read_text().splitlines()
        assert len(lines) == 1 + 3
        assert '"format": "vpm-trajectory"' in lines[0]
        assert '"actions"' not in lines[1]
        assert '"reward"' in lines[2]

    def test_not_a_log(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("this is not json\n")
        with pytest.raises(InvalidStateError):
            load_log(path)
        path.write_text('{"format": "something-else"}\n')
        with pytest.raises(InvalidStateError):
            load_log(path)
        with pytest.raises(InvalidStateError):
            load_log(tmp_path / "missing.jsonl")


class TestCompare:

    def test_grid(self, small_config):
        report = compare(small_config)
        frame = report.results
        assert list(frame.columns) == COLUMNS
        assert len(frame) == 4
        assert frame['policy'].tolist() == ['gcs', 'gcs', 'random', 'random']
        assert frame['seed'].tolist() == [0, 1, 0, 1]
        assert (frame['error'] == '').all()
        assert np.allclose(frame['penalty_e6'], frame['cumulative_penalty'] * 1e-6)
        assert set(report.summary()['count']) == {2}

    def test_csv_is_byte_identical(self, small_config, tmp_path):
        small_config.experiment.out_csv = str(tmp_path / "a.csv")
        compare(small_config)
        small_config.experiment.out_csv = str(tmp_path / "b.csv")
        compare(small_config)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_worker_count_does_not_change_csv(self, small_config, tmp_path):
        small_config.experiment.out_csv = str(tmp_path / "serial.csv")
        compare(small_config)
        small_config.experiment.workers = 2
        small_config.experiment.out_csv = str(tmp_path / "parallel.csv")
        compare(small_config)
        assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "parallel.csv").read_bytes()

    def test_failing_cell_is_reported(self, small_config):
        small_config.experiment.maps = ['open_10', 'no_such_map']
        report = compare(small_config)
        assert len(report.results) == 8
        failures = report.failures
        assert len(failures) == 4
        assert set(failures['map']) == {'no_such_map'}
        assert failures['error'].str.startswith('MapFormatError').all()
        assert failures['cumulative_penalty'].isna().all()
        assert len(report.summary()) == 2

    def test_unexpected_exception_is_reported(self, small_config, monkeypatch):
        monkeypatch.setitem(PolicyFactory._policies, 'explode', ExplodingPolicy)
        small_config.experiment.policies = ['explode', 'gcs', 'random']
        report = compare(small_config)
        assert len(report.results) == 6
        failures = report.failures
        assert failures['policy'].tolist() == ['explode', 'explode']
        assert (failures['error'] == 'RuntimeError: actuator fault').all()
        ok = report.results[report.results['error'] == '']
        assert set(ok['policy']) == {'gcs', 'random'}
        assert ok['cumulative_penalty'].notna().all()

    def test_cross_table_with_trained_network(self, small_config):
        train(small_config)
        small_config.experiment.policies = ['gcs', 'net:latest']
        small_config.experiment.n_agents = [2, 3]
        report = compare(small_config)
        assert (report.results['error'] == '').all()
        net_rows = report.results[report.results['policy'] == 'net:latest']
        assert set(net_rows['n_train']) == {2}
        assert set(net_rows['n_test']) == {2, 3}

        table = report.cross_table('open_10')
        assert list(table.columns) == [2, 3]
        assert ('net:latest', 2) in table.index
        assert ('gcs', 3) in table.index
        assert not np.isnan(table.loc[('net:latest', 2), 3])
        assert "net:latest" in report.format_table()

    @pytest.mark.slow
    def test_baselines_beat_random(self, tmp_path):
        config = load_config(CONFIG_DIR / "compare_open20.yaml")
        config.experiment.out_csv = None
        summary = compare(config).summary().set_index('policy')['mean']
        assert summary['gcs'] < 0.7 * summary['random']
        assert summary['tspc'] < 0.7 * summary['random']


class TestPeriod:

    def test_sine(self):
        t = np.arange(200)
        period = detect_period(np.sin(2 * np.pi * t / 20))
        assert abs(period - 20) <= 1

    def test_noise_has_no_period(self, rng):
        assert detect_period(rng.standard_normal(300)) is None

    def test_constant(self):
        assert detect_period([3.0] * 50) is None

    def test_too_short(self):
        with pytest.raises(AnalysisError):
            detect_period([1.0, 2.0, 3.0])

    def test_tiled_pattern_prefers_fundamental(self):
        assert detect_period([0, 1, 2, 3, 2, 1] * 10) == 6

    @pytest.mark.parametrize("seed", range(20))
    def test_random_patterns(self, seed):
        rng = np.random.default_rng(seed)
        period = int(rng.integers(5, 16))
        pattern = rng.uniform(-1.0, 1.0, size=period)
        series = np.tile(pattern, 80 // period + 2)
        assert abs(detect_period(series) - period) <= 1

    def test_tspc_log(self):
        tour = _open20_tour()
        cycle = len(tour.cycle)
        log, _ = run_policy(_tspc_config(4 * cycle), "tspc", seed=0)
        period = detect_period(log.agent_series(0, axis=0))
        assert period is not None
        assert cycle % period == 0


class TestPhase:

    def _pattern(self, rng, period, repeats=6):
        return np.tile(rng.uniform(-1.0, 1.0, size=period), repeats)

    def test_known_offset(self, rng):
        a = self._pattern(rng, 12)
        assert phase_difference(a, np.roll(a, 5), 12) == 5

    def test_identical(self, rng):
        a = self._pattern(rng, 12)
        assert phase_difference(a, a, 12) == 0

    def test_full_period_is_zero(self, rng):
        a = self._pattern(rng, 12)
        assert phase_difference(a, np.roll(a, 12), 12) == 0

    @pytest.mark.parametrize("seed", range(20))
    def test_random_offsets(self, seed):
        rng = np.random.default_rng(seed)
        period = int(rng.integers(6, 20))
        offset = int(rng.integers(0, period))
        a = self._pattern(rng, period)
        found = phase_difference(a, np.roll(a, offset), period)
        assert min(abs(found - offset), period - abs(found - offset)) <= 1

    def test_lag_uses_unwrapped_overlap(self, rng):
        a = rng.normal(size=60)
        b = np.concatenate([rng.normal(size=7), a[:-7]])
        assert phase_difference(a, b, 10) == 7

    def test_invalid_inputs(self):
        with pytest.raises(AnalysisError):
            phase_difference([1.0] * 10, [1.0] * 9, 3)
        with pytest.raises(AnalysisError):
            phase_difference([1.0] * 10, [1.0] * 10, 6)
        with pytest.raises(AnalysisError):
            phase_difference([1.0] * 10, [1.0] * 10, 0)


class TestPolar:

    def test_ring_period(self):
        series = polar_series(_ring_log(), 0, (5.0, 5.0))
        assert detect_period(series) == 40

    def test_stationary(self):
        log = TrajectoryLog(positions=[((2, 7),)] * 30)
        series = polar_series(log, 0, (5.0, 5.0))
        assert np.all(series == series[0])
        assert series[0] == pytest.approx(math.sin(math.atan2(-3, 2)))

    def test_center_holds_previous_angle(self):
        log = TrajectoryLog(positions=[((5, 5),), ((5, 6),), ((5, 5),)])
        assert polar_series(log, 0, (5.0, 5.0)).tolist() == [0.0, 0.0, 0.0]

    def test_center_defaults_to_logged_map(self):
        log = _ring_log(side=10)
        log.metadata['map'] = 'open_10'
        assert np.array_equal(polar_series(log, 0), polar_series(log, 0, (4.5, 4.5)))

    def test_default_center_needs_a_map(self):
        with pytest.raises(AnalysisError):
            polar_series(_ring_log(), 0)

    def test_map_center(self, open_10):
        assert map_center(open_10) == (4.5, 4.5)

    def test_bad_agent(self):
        with pytest.raises(InvalidStateError):
            polar_series(_ring_log(), 1, (5.0, 5.0))


class TestTrail:

    def test_zero_step_log(self, open_10):
        log = TrajectoryLog(positions=[((2, 3), (7, 7))])
        image = render_trail(log, open_10, scale=1)
        assert tuple(image[2, 3]) == AGENT_HUES[0]
        assert tuple(image[7, 7]) == AGENT_HUES[1]
        untouched = np.ones((10, 10), dtype=bool)
        untouched[2, 3] = untouched[7, 7] = False
        assert (image[untouched] == BACKGROUND_COLOR).all()

    def test_tspc_trail_covers_cycle(self):
        tour = _open20_tour()
        log, _ = run_policy(_tspc_config(len(tour.cycle)), "tspc", seed=0)
        grid_map, _ = resolve_map("open_20")
        image = render_trail(log, grid_map, scale=1)
        marked = {
            (int(r), int(c))
            for r, c in zip(*np.nonzero((image != BACKGROUND_COLOR).any(axis=-1)))
        }
        assert marked == set(tour.cycle)

    def test_obstacles_are_dark(self):
        grid_map, _ = resolve_map("two_room")
        log = TrajectoryLog(positions=[((4, 4),)])
        image = render_trail(log, grid_map, scale=1)
        r, c = map(int, np.argwhere(grid_map.obstacles)[0])
        assert tuple(image[r, c]) == (40, 40, 40)

    def test_scaled_ppm_is_deterministic(self, small_config, tmp_path):
        log, _ = run_policy(small_config, "random", seed=0)
        grid_map = open_map(10, 10)
        first = emit_trail(log, grid_map, tmp_path / "a.ppm", scale=3).read_bytes()
        second = emit_trail(log, grid_map, tmp_path / "b.ppm", scale=3).read_bytes()
        assert first == second
        assert first.startswith(b"P6\n30 30\n255\n")
        assert len(first) == len(b"P6\n30 30\n255\n") + 30 * 30 * 3

    def test_image_shape_checked(self, tmp_path):
        with pytest.raises(InvalidStateError):
            write_ppm(tmp_path / "x.ppm", np.zeros((4, 4)))

    def test_read_pgm_rejects_other_formats(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_text("P5\n1 1\n255\n")
        with pytest.raises(InvalidStateError):
            read_pgm(path)
