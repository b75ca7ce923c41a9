"""
Training loop for the shared actor-critic and the learned joint-action policy.

Every episode draws its own seed stream from (seed, episode), so a run is
reproducible whether its episodes are collected in one process or several.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union, TYPE_CHECKING

import numpy as np
import pandas as pd

from ..core.exceptions import (
    CheckpointError, ConfigurationError, PolicyError, TrainingDivergedError,
)
from ..core.factories import Policy
from ..core.models import Action, GridMap, ObservationMode, WorldState
from ..observation.observations import make_observation, normalization_constants
from ..state.local_backend import LocalCheckpointManager
from ..utils.logging import get_logger, log_performance
from ..world.gridworld import step_detailed
from ..world.maps import resolve_map, world_from_config
from .autodiff import no_grad
from .network import PolicyNet, sample_actions
from .ppo import Adam, RolloutBatch, ppo_update

if TYPE_CHECKING:
    from ..core.config import VPMConfig
    from ..monitoring.metrics import MetricsCollector

logger = get_logger(__name__)


@dataclass
class EpisodeRollout:
    """Everything recorded while one episode is played by the network."""

    observations: np.ndarray  # (T, N, C, S, S)
    actions: np.ndarray  # (T, N)
    log_probs: np.ndarray  # (T, N)
    values: np.ndarray  # (T, N)
    rewards: np.ndarray  # (T,) raw shared rewards

    @property
    def cumulative_penalty(self) -> float:
        return float(np.abs(self.rewards).sum())


@dataclass
class TrainingResult:
    """Per-episode curves and the trained network."""

    net: PolicyNet
    curve: List[float] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    entropies: List[float] = field(default_factory=list)
    last_checkpoint: Optional[str] = None

    @property
    def episodes(self) -> int:
        return len(self.curve)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'episode': np.arange(1, len(self.curve) + 1),
            'cumulative_penalty': self.curve,
            'loss': self.losses,
            'entropy': self.entropies,
        })


def rolling_mean(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing mean over ``window`` entries; shorter at the start."""
    if window < 1:
        raise ConfigurationError(f"Rolling window must be positive: {window}")
    return pd.Series(values, dtype=np.float64).rolling(window, min_periods=1).mean().to_numpy()


def observation_channels(config: 'VPMConfig') -> int:
    return ObservationMode(config.observation.mode).channels


def build_net(config: 'VPMConfig', rng: Optional[np.random.Generator] = None) -> PolicyNet:
    return PolicyNet(
        observation_channels(config),
        config.observation.obs_size,
        config.network,
        rng=rng,
    )


def reward_scale(config: 'VPMConfig', grid_map: GridMap) -> float:
    """Factor applied to shared rewards before they enter returns."""
    if config.ppo.reward_scale is not None:
        return float(config.ppo.reward_scale)
    return 1.0 / (grid_map.free_count * config.environment.r_max)


def joint_observation(world: WorldState, mode: Union[ObservationMode, str], size: int) -> np.ndarray:
    """Stacked normalized observations, shape (N, C, S, S)."""
    return np.stack([
        make_observation(world, agent.id, mode, size).data for agent in world.agents
    ])


def episode_rngs(seed: int, episode: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent (placement, action) generators for one episode."""
    env_seq, act_seq = np.random.SeedSequence([seed, episode]).spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(act_seq)


def collect_episode(
    net: PolicyNet,
    world: WorldState,
    steps: int,
    rng: np.random.Generator,
    mode: Union[ObservationMode, str] = ObservationMode.BOTH,
    size: int = 25,
    greedy: bool = False,
) -> EpisodeRollout:
    """Play ``steps`` steps with the current network, recording what PPO needs."""
    observations, actions, log_probs, values, rewards = [], [], [], [], []
    with no_grad():
        for _ in range(steps):
            obs = joint_observation(world, mode, size)
            logits, value = net.forward(obs)
            chosen, logp = sample_actions(logits.data, rng, greedy=greedy)
            result = step_detailed(world, [Action(int(a)) for a in chosen])

            observations.append(obs)
            actions.append(chosen)
            log_probs.append(logp)
            values.append(value.data)
            rewards.append(result.reward)
            world = result.state

    n, channels = world.n_agents, ObservationMode(mode).channels
    if not observations:
        return EpisodeRollout(
            observations=np.zeros((0, n, channels, size, size)),
            actions=np.zeros((0, n), dtype=np.int64),
            log_probs=np.zeros((0, n)),
            values=np.zeros((0, n)),
            rewards=np.zeros(0),
        )
    return EpisodeRollout(
        observations=np.stack(observations),
        actions=np.stack(actions).astype(np.int64),
        log_probs=np.stack(log_probs),
        values=np.stack(values),
        rewards=np.asarray(rewards, dtype=np.float64),
    )


def _play_episode(config: 'VPMConfig', net: PolicyNet, seed: int, episode: int) -> EpisodeRollout:
    env_rng, act_rng = episode_rngs(seed, episode)
    world = world_from_config(config.environment, env_rng)
    return collect_episode(
        net, world, config.environment.steps, act_rng,
        mode=config.observation.mode, size=config.observation.obs_size,
    )


def _play_episode_remote(args) -> EpisodeRollout:
    """Worker entry point: rebuild the network from a parameter snapshot."""
    config, parameters, seed, episode = args
    net = build_net(config)
    net.load_state_dict(parameters)
    return _play_episode(config, net, seed, episode)


def _collect(
    config: 'VPMConfig',
    net: PolicyNet,
    seed: int,
    episodes: List[int],
    pool: Optional[ProcessPoolExecutor],
) -> List[EpisodeRollout]:
    if pool is None or len(episodes) == 1:
        return [_play_episode(config, net, seed, episode) for episode in episodes]
    snapshot = net.state_dict()
    # map() keeps submission order, so batches concatenate in episode order
    return list(pool.map(_play_episode_remote, [(config, snapshot, seed, e) for e in episodes]))


def _memory_mb() -> Optional[float]:
    try:
        import psutil
        return psutil.Process().memory_info().rss / (1024 ** 2)
    except ImportError:
        return None


def _save(
    manager: LocalCheckpointManager,
    net: PolicyNet,
    config: 'VPMConfig',
    episode: int,
    metrics: Optional['MetricsCollector'],
) -> Optional[str]:
    checkpoint_id = f"{config.training.run_name}_{episode:06d}"
    state = net.to_checkpoint(config.config_hash(), episode, normalization_constants())
    state['n_train'] = config.environment.n_agents
    if manager.save_checkpoint(state, checkpoint_id):
        if metrics:
            metrics.record_checkpoint_saved(checkpoint_id)
        memory = _memory_mb()
        logger.info(
            f"Checkpoint {checkpoint_id} written"
            + (f" (rss {memory:.0f} MB)" if memory is not None else "")
        )
        return checkpoint_id
    if metrics:
        metrics.record_checkpoint_error(checkpoint_id)
    return None


@log_performance
def train(
    config: 'VPMConfig',
    net: Optional[PolicyNet] = None,
    seed: Optional[int] = None,
    checkpoint_manager: Optional[LocalCheckpointManager] = None,
    metrics: Optional['MetricsCollector'] = None,
) -> TrainingResult:
    """
    Train the shared actor-critic with clipped PPO.

    Every ``episodes_per_update`` episodes the collected steps form one
    batch for ``ppo.epochs`` passes of minibatched updates. Checkpoints are
    written every ``checkpoint_interval`` episodes and after the last one.

    Raises:
        TrainingDivergedError: the loss or gradients became non-finite; the
            error carries the episode and the last good checkpoint id.
    """
    seed = config.training.seed if seed is None else seed
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)

    net = net or build_net(config, np.random.default_rng(init_seq))
    ppo = config.ppo
    optimizer = Adam(
        net.parameters(),
        learning_rate=ppo.learning_rate,
        beta1=ppo.adam_beta1,
        beta2=ppo.adam_beta2,
        eps=ppo.adam_eps,
    )
    grid_map, _ = resolve_map(config.environment.map)
    scale = reward_scale(config, grid_map)
    manager = checkpoint_manager or LocalCheckpointManager(config.state)
    training = config.training

    logger.info(
        f"Training on {grid_map.name} with {config.environment.n_agents} agents for "
        f"{training.episodes} episodes (seed {seed}, {net.num_parameters()} parameters)"
    )

    result = TrainingResult(net=net)
    pool = ProcessPoolExecutor(max_workers=training.workers) if training.workers > 1 else None
    try:
        episode = 0
        while episode < training.episodes:
            group = list(range(episode + 1, min(episode + training.episodes_per_update, training.episodes) + 1))
            rollouts = _collect(config, net, seed, group, pool)

            batches = []
            for number, rollout in zip(group, rollouts):
                result.curve.append(rollout.cumulative_penalty)
                if metrics:
                    metrics.record_episode('net', rollout.cumulative_penalty, len(rollout.rewards))
                if len(rollout.rewards):
                    batches.append(RolloutBatch.from_episode(
                        rollout.observations,
                        rollout.actions,
                        rollout.log_probs,
                        rollout.rewards * scale,
                        rollout.values,
                        ppo.gamma,
                        episode_id=number,
                    ))
            episode = group[-1]

            stats: Dict[str, float] = {}
            if batches:
                try:
                    stats = ppo_update(
                        net, optimizer, RolloutBatch.concatenate(batches), shuffle_rng,
                        epsilon=ppo.clip_epsilon,
                        epochs=ppo.epochs,
                        minibatch_size=ppo.minibatch_size,
                        value_coef=ppo.value_coef,
                        entropy_coef=ppo.entropy_coef,
                        max_grad_norm=ppo.max_grad_norm,
                        normalize_advantages=ppo.normalize_advantages,
                    )
                except TrainingDivergedError as e:
                    if metrics:
                        metrics.record_divergence(episode)
                    logger.error(
                        f"Training diverged at episode {episode}; "
                        f"last good checkpoint: {result.last_checkpoint}"
                    )
                    raise TrainingDivergedError(
                        f"Training diverged at episode {episode}: {e.message}",
                        episode=episode,
                        last_checkpoint=result.last_checkpoint,
                        details=e.details,
                    )
                if metrics:
                    metrics.record_update(stats)

            # loss and entropy are per update; episodes inside a group share them
            for _ in group:
                result.losses.append(stats.get('loss', float('nan')))
                result.entropies.append(stats.get('entropy', float('nan')))

            if any(n % training.checkpoint_interval == 0 for n in group) or episode == training.episodes:
                result.last_checkpoint = _save(manager, net, config, episode, metrics) or result.last_checkpoint
                window = rolling_mean(result.curve, training.rolling_window)
                logger.info(
                    f"Episode {episode}: penalty {result.curve[-1]:.1f}, "
                    f"rolling mean {window[-1]:.1f}, loss {stats.get('loss', float('nan')):.4f}"
                )
            else:
                logger.debug(f"Episode {episode}: penalty {result.curve[-1]:.1f}")
    finally:
        if pool is not None:
            pool.shutdown()

    if training.log_csv:
        path = Path(training.log_csv)
        path.parent.mkdir(parents=True, exist_ok=True)
        result.to_frame().to_csv(path, index=False, float_format='%.6f', na_rep='')
        logger.info(f"Training log written to {path}")

    return result


class NetPolicy(Policy):
    """
    Trained network as a joint-action policy.

    The argument is a checkpoint file path, a checkpoint id in
    ``state.directory``, or ``latest``. One network serves any number of
    agents.
    """

    name = "net"

    def __init__(
        self,
        config: 'VPMConfig',
        argument: Optional[str] = None,
        net: Optional[PolicyNet] = None,
    ):
        self.mode = ObservationMode(config.observation.mode)
        self.size = config.observation.obs_size
        self.greedy = config.experiment.greedy
        self.source = argument or 'in-memory'
        self.n_train: Optional[int] = None
        if net is None:
            if not argument:
                raise PolicyError("The net policy needs a checkpoint: use net:<path or id>")
            state = self._load_state(config, argument)
            net = PolicyNet.from_checkpoint(
                state,
                expected_hash=config.config_hash(),
                obs_normalization=normalization_constants(),
            )
            self.n_train = state.get('n_train')
            logger.info(f"Loaded network from {argument} (episode {state.get('episode')})")
        self.net = net

    @staticmethod
    def _load_state(config: 'VPMConfig', argument: str) -> Dict:
        manager = LocalCheckpointManager(config.state)
        if Path(argument).is_file():
            return manager.load_checkpoint_file(argument)
        if argument == 'latest':
            latest = manager.latest_checkpoint()
            if latest is None:
                raise CheckpointError(f"No checkpoints in {manager.checkpoint_dir}")
            argument = latest.checkpoint_id
        state = manager.load_checkpoint(argument)
        if state is None:
            raise CheckpointError(f"Checkpoint not found: {argument}")
        return state

    def act(self, world: WorldState, rng: np.random.Generator) -> List[Action]:
        with no_grad():
            logits, _ = self.net.forward(joint_observation(world, self.mode, self.size))
        actions, _ = sample_actions(logits.data, rng, greedy=self.greedy)
        return [Action(int(a)) for a in actions]
