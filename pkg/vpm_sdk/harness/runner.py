"""
Episode runner and the line-delimited JSON trajectory log.
"""

import json
from pathlib import Path
from typing import Optional, Tuple, Union, TYPE_CHECKING

import numpy as np

from ..core.exceptions import InvalidStateError, PolicyError
from ..core.factories import Policy, PolicyFactory
from ..core.models import ObservationMode, TrajectoryLog, WorldState
from ..observation.observations import dump_observation, make_observation
from ..utils.logging import get_logger
from ..world.gridworld import step_detailed
from ..world.maps import resolve_map, world_from_config

if TYPE_CHECKING:
    from ..core.config import VPMConfig
    from ..monitoring.metrics import MetricsCollector

logger = get_logger(__name__)

LOG_FORMAT = "vpm-trajectory"
LOG_VERSION = 1


def run_episode(
    policy: Policy,
    world: WorldState,
    steps: int,
    rng: np.random.Generator,
    dump_dir: Optional[Union[str, Path]] = None,
    obs_mode: Union[ObservationMode, str] = ObservationMode.BOTH,
    obs_size: int = 25,
    record_visibility: bool = False,
) -> Tuple[TrajectoryLog, float]:
    """
    Step ``world`` ``steps`` times under ``policy``.

    Returns the log (steps + 1 position records) and the cumulative
    |penalty|, which always equals the sum of |reward| in the log.
    """
    if steps < 0:
        raise InvalidStateError(f"Episode length must be non-negative: {steps}")

    policy.reset(world, rng)
    log = TrajectoryLog(
        positions=[tuple(world.positions)],
        visibility=[] if record_visibility else None,
    )
    total = 0.0

    for t in range(steps):
        if dump_dir is not None:
            for agent in world.agents:
                observation = make_observation(world, agent.id, obs_mode, obs_size)
                dump_observation(observation, dump_dir, t, world.penalties.r_max)

        joint_action = policy.act(world, rng)
        if len(joint_action) != world.n_agents:
            raise PolicyError(
                f"Policy {policy.name} returned {len(joint_action)} actions for {world.n_agents} agents"
            )
        result = step_detailed(world, joint_action)
        world = result.state

        log.positions.append(tuple(world.positions))
        log.actions.append(tuple(int(a) for a in joint_action))
        log.rewards.append(result.reward)
        if record_visibility:
            log.visibility.append(result.visible)
        total += abs(result.reward)

    logger.debug(f"Episode with {policy.name}: {steps} steps, cumulative penalty {total:.1f}")
    return log, total


def make_world(
    config: 'VPMConfig',
    policy: Policy,
    rng: np.random.Generator,
    map_name: Optional[str] = None,
    n_agents: Optional[int] = None,
) -> WorldState:
    """Initial world, with the start cells the policy asks for if any."""
    grid_map, _ = resolve_map(map_name or config.environment.map)
    n_agents = n_agents or config.environment.n_agents
    positions = policy.initial_positions(grid_map, n_agents, config.environment.fov, rng)
    return world_from_config(config.environment, rng, map_name, n_agents, positions)


def run_policy(
    config: 'VPMConfig',
    policy_spec: str,
    seed: int,
    map_name: Optional[str] = None,
    n_agents: Optional[int] = None,
    steps: Optional[int] = None,
    dump_dir: Optional[Union[str, Path]] = None,
    metrics: Optional['MetricsCollector'] = None,
) -> Tuple[TrajectoryLog, float]:
    """
    One seeded episode of a policy spec such as ``gcs`` or ``net:latest``.

    Placement and acting draw from separate streams of ``seed``.
    """
    place_seq, act_seq = np.random.SeedSequence(seed).spawn(2)
    policy = PolicyFactory.create(policy_spec, config)
    world = make_world(config, policy, np.random.default_rng(place_seq), map_name, n_agents)
    steps = config.environment.steps if steps is None else steps

    log, total = run_episode(
        policy, world, steps, np.random.default_rng(act_seq),
        dump_dir=dump_dir,
        obs_mode=config.observation.mode,
        obs_size=config.observation.obs_size,
    )
    log.metadata.update({
        'map': world.map.name,
        'policy': policy_spec,
        'seed': seed,
        'steps': steps,
        'n_agents': world.n_agents,
        'fov': world.fov,
        'n_train': getattr(policy, 'n_train', None) or world.n_agents,
    })
    if metrics:
        metrics.record_episode(policy.name, total, steps)
    return log, total


def save_log(log: TrajectoryLog, path: Union[str, Path]) -> Path:
    """
    Write ``log`` as JSON lines: a header, then one record per timestep.

    Record t holds the positions after step t; records with t >= 1 also
    hold the joint action and shared reward of that step.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        header = {'format': LOG_FORMAT, 'version': LOG_VERSION, 'metadata': log.metadata}
        f.write(json.dumps(header, sort_keys=True) + '\n')
        for t, positions in enumerate(log.positions):
            record = {'t': t, 'positions': [list(p) for p in positions]}
            if t > 0:
                record['actions'] = list(log.actions[t - 1])
                record['reward'] = log.rewards[t - 1]
            f.write(json.dumps(record, sort_keys=True) + '\n')
    logger.info(f"Trajectory log written to {path}")
    return path


def load_log(path: Union[str, Path]) -> TrajectoryLog:
    """Read a log written by :func:`save_log`."""
    path = Path(path)
    try:
        lines = [line for line in path.read_text().splitlines() if line.strip()]
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:]]
    except (OSError, IndexError, ValueError) as e:
        raise InvalidStateError(f"Cannot read trajectory log {path}: {e}")
    if header.get('format') != LOG_FORMAT:
        raise InvalidStateError(f"Not a trajectory log: {path}")

    log = TrajectoryLog(metadata=header.get('metadata', {}))
    for record in records:
        log.positions.append(tuple(tuple(p) for p in record['positions']))
        if record['t'] > 0:
            log.actions.append(tuple(record['actions']))
            log.rewards.append(float(record['reward']))
    return log
