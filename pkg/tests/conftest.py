import os

import numpy as np
import pytest

from vpm_sdk.core.config import VPMConfig
from vpm_sdk.world.gridworld import load_map, reset_world
from vpm_sdk.world.maps import open_map


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale acceptance checks (minutes)")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep VPM_SDK_* variables of the calling shell out of every test."""
    for key in list(os.environ):
        if key.startswith('VPM_SDK_'):
            monkeypatch.delenv(key, raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def open_5():
    return open_map(5, 5)


@pytest.fixture
def open_10():
    return open_map(10, 10)


@pytest.fixture
def open_50():
    return open_map(50, 50)


@pytest.fixture
def make_world():
    """World factory with explicit start cells."""
    def _make(grid_map, positions, fov=5, decay_rate=1.0, r_max=400.0, coverage_mode=False):
        return reset_world(
            grid_map, len(positions), fov,
            decay_rate=decay_rate, r_max=r_max,
            starts=positions, coverage_mode=coverage_mode,
        )
    return _make


@pytest.fixture
def walled_map():
    """7x7 map with a vertical wall in column 4, rows 1..5."""
    text = "\n".join([
        ".......",
        "....#..",
        "....#..",
        "....#..",
        "....#..",
        "....#..",
        ".......",
    ])
    grid_map, _ = load_map(text, name="walled")
    return grid_map


@pytest.fixture
def small_config(tmp_path):
    """Desk-sized configuration that trains and compares in seconds."""
    return VPMConfig.from_dict({
        'environment': {
            'map': 'open_10', 'n_agents': 2, 'fov': 5, 'steps': 12, 'random_starts': True,
        },
        'observation': {'mode': 'local', 'obs_size': 5},
        'network': {'feature_dim': 8, 'heads': 2, 'conv_channels': [4]},
        'ppo': {'epochs': 2, 'minibatch_size': 8, 'learning_rate': 1e-3},
        'training': {
            'episodes': 4,
            'episodes_per_update': 2,
            'checkpoint_interval': 2,
            'rolling_window': 2,
            'log_csv': str(tmp_path / 'training.csv'),
            'run_name': 'test',
        },
        'experiment': {
            'policies': ['random', 'gcs'],
            'maps': ['open_10'],
            'n_agents': [2],
            'seeds': [0, 1],
            'steps': 15,
            'out_csv': None,
        },
        'state': {'directory': str(tmp_path / 'checkpoints'), 'max_checkpoints': 3},
    })
