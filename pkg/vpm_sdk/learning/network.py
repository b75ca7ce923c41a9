"""
PolicyNet: shared-weight CNN encoder, multi-head graph attention across
agents, and actor / critic heads.

Every agent runs the same parameters. Agent features h_i come from the CNN;
the attention layer mixes the other agents' projected features into h'_i;
the heads read [h_i ; h'_i].
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.config import NetworkConfig
from ..core.exceptions import CheckpointError, GradientError
from ..core.models import NUM_ACTIONS
from ..utils.logging import get_logger
from ..version import __checkpoint_format__
from .autodiff import Tensor, as_tensor, concat, softmax
from .layers import ParameterSet, conv2d, conv_output_size, glorot_uniform, he_uniform, linear

logger = get_logger(__name__)

NeighborFeatures = Sequence[Tuple[int, np.ndarray]]


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


class PolicyNet:
    """Parameter container and forward pass of the actor-critic network."""

    def __init__(
        self,
        in_channels: int,
        obs_size: int,
        config: Optional[NetworkConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        self.config = config or NetworkConfig()
        self.in_channels = int(in_channels)
        self.obs_size = int(obs_size)
        rng = rng if rng is not None else np.random.default_rng(0)

        cfg = self.config
        self.feature_dim = cfg.feature_dim
        self.heads = cfg.heads
        self.padding = cfg.kernel_size // 2
        self.params = ParameterSet()

        channels = [self.in_channels] + list(cfg.conv_channels)
        spatial = self.obs_size
        k = cfg.kernel_size
        for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:])):
            self.params.add(f"conv{i}.weight", he_uniform(rng, (c_out, c_in, k, k), c_in * k * k))
            self.params.add(f"conv{i}.bias", np.zeros(c_out))
            spatial = conv_output_size(spatial, k, cfg.stride, self.padding)
            if spatial < 1:
                raise GradientError(
                    f"Observation size {self.obs_size} is too small for {len(channels) - 1} conv layers"
                )
        self.n_conv = len(channels) - 1
        self.flat_dim = channels[-1] * spatial * spatial

        F = self.feature_dim
        M = self.heads
        self.params.add("encoder.weight", glorot_uniform(rng, (F, self.flat_dim), self.flat_dim, F))
        self.params.add("encoder.bias", np.zeros(F))
        self.params.add("gat.W", glorot_uniform(rng, (M, F, F), F, F))
        self.params.add("gat.a_src", glorot_uniform(rng, (M, F), 2 * F, 1))
        self.params.add("gat.a_dst", glorot_uniform(rng, (M, F), 2 * F, 1))
        self.params.add("gat.b", np.zeros(M))
        # small actor init keeps the initial policy close to uniform
        self.params.add("actor.weight", 0.01 * rng.standard_normal((NUM_ACTIONS, 2 * F)))
        self.params.add("actor.bias", np.zeros(NUM_ACTIONS))
        self.params.add("critic.weight", glorot_uniform(rng, (1, 2 * F), 2 * F, 1))
        self.params.add("critic.bias", np.zeros(1))

        logger.debug(
            f"PolicyNet: {in_channels}x{obs_size}x{obs_size} input, F={F}, heads={M}, "
            f"{self.num_parameters()} parameters"
        )

    # Parameters

    def parameters(self) -> List[Tensor]:
        return list(self.params)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params))

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return self.params.state_dict()

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        self.params.load_state_dict(state)

    # Forward pieces

    def cnn_encode(self, obs: Union[np.ndarray, Tensor]) -> Tensor:
        """Observations (..., C, S, S) to features (..., F)."""
        x = as_tensor(obs)
        if x.shape[-3:] != (self.in_channels, self.obs_size, self.obs_size):
            raise GradientError(
                f"Observation shape {x.shape[-3:]} does not match "
                f"{(self.in_channels, self.obs_size, self.obs_size)}"
            )
        lead = x.shape[:-3]
        x = x.reshape(-1, self.in_channels, self.obs_size, self.obs_size)
        for i in range(self.n_conv):
            x = conv2d(
                x, self.params[f"conv{i}.weight"], self.params[f"conv{i}.bias"],
                stride=self.config.stride, padding=self.padding
            ).relu()
        x = x.reshape(x.shape[0], -1)
        h = linear(x, self.params["encoder.weight"], self.params["encoder.bias"])
        return h.reshape(*lead, self.feature_dim)

    def communicate(self, h: Tensor) -> Tuple[Tensor, Optional[Tensor]]:
        """
        Graph attention over the agent axis of ``h`` (..., N, F).

        Returns h' (..., N, F) and the attention weights (..., M, N, N), or
        zeros and None when there is nobody to attend to.
        """
        n_agents = h.shape[-2]
        if n_agents < 2 or not self.config.use_gat:
            return Tensor(np.zeros(h.shape)), None

        lead = h.shape[:-2]
        B = int(np.prod(lead)) if lead else 1
        F = self.feature_dim
        M = self.heads

        hb = h.reshape(B, 1, n_agents, F)
        W = self.params["gat.W"]
        Wh = hb @ W.swapaxes(-1, -2)  # (B, M, N, F)

        s_src = (Wh * self.params["gat.a_src"].reshape(1, M, 1, F)).sum(axis=-1)
        s_dst = (Wh * self.params["gat.a_dst"].reshape(1, M, 1, F)).sum(axis=-1)
        scores = (
            s_src.reshape(B, M, n_agents, 1)
            + s_dst.reshape(B, M, 1, n_agents)
            + self.params["gat.b"].reshape(1, M, 1, 1)
        ).leaky_relu(self.config.leaky_slope)

        others = ~np.eye(n_agents, dtype=bool)
        alpha = softmax(scores, axis=-1, mask=others)
        aggregated = (alpha @ Wh).mean(axis=1)  # (B, N, F)
        return aggregated.reshape(*lead, n_agents, F), alpha.reshape(*lead, M, n_agents, n_agents)

    def actor_critic(self, h: Tensor, h_prime: Tensor) -> Tuple[Tensor, Tensor]:
        """Heads over [h ; h']: action logits (..., 5) and values (...)."""
        x = concat([h, h_prime], axis=-1)
        logits = linear(x, self.params["actor.weight"], self.params["actor.bias"])
        value = linear(x, self.params["critic.weight"], self.params["critic.bias"])
        return logits, value.reshape(*value.shape[:-1])

    def forward(self, obs: Union[np.ndarray, Tensor]) -> Tuple[Tensor, Tensor]:
        """Joint observations (..., N, C, S, S) to logits (..., N, 5) and values (..., N)."""
        h = self.cnn_encode(obs)
        h_prime, _ = self.communicate(h)
        return self.actor_critic(h, h_prime)

    __call__ = forward

    # Per-agent attention (order-independent reference form)

    def gat_attention(self, h_i: np.ndarray, neighbors: NeighborFeatures, head: int) -> Dict[int, float]:
        """
        Attention of agent i over its neighbors for one head.

        ``neighbors`` holds (agent id, h_j) pairs; they are processed in id
        order so the result does not depend on the order given.
        """
        if not neighbors:
            raise GradientError("Attention needs at least one neighbor")
        items = sorted(neighbors, key=lambda item: item[0])
        W = self.params["gat.W"].data[head]
        a_src = self.params["gat.a_src"].data[head]
        a_dst = self.params["gat.a_dst"].data[head]
        bias = self.params["gat.b"].data[head]

        source = float(a_src @ (W @ np.asarray(h_i, dtype=np.float64)))
        scores = np.array([
            source + float(a_dst @ (W @ np.asarray(h_j, dtype=np.float64))) + bias
            for _, h_j in items
        ])
        scores = _leaky(scores, self.config.leaky_slope)
        e = np.exp(scores - scores.max())
        weights = e / e.sum()
        return {agent_id: float(w) for (agent_id, _), w in zip(items, weights)}

    def gat_aggregate(self, neighbors: NeighborFeatures, weights: Sequence[Dict[int, float]]) -> np.ndarray:
        """h'_i = (1/M) sum_m sum_j alpha^m_ij W^m h_j, summed in id order."""
        F = self.feature_dim
        if not neighbors or not self.config.use_gat:
            return np.zeros(F)
        items = sorted(neighbors, key=lambda item: item[0])
        W = self.params["gat.W"].data
        total = np.zeros(F)
        for head, head_weights in enumerate(weights):
            for agent_id, h_j in items:
                total = total + head_weights[agent_id] * (W[head] @ np.asarray(h_j, dtype=np.float64))
        return total / len(weights)

    def aggregate_for(self, agent_id: int, features: NeighborFeatures) -> np.ndarray:
        """h'_i for one agent given every agent's (id, h)."""
        h_i = dict(features)[agent_id]
        neighbors = [(j, h_j) for j, h_j in features if j != agent_id]
        if not neighbors:
            return np.zeros(self.feature_dim)
        weights = [self.gat_attention(h_i, neighbors, m) for m in range(self.heads)]
        return self.gat_aggregate(neighbors, weights)

    # Checkpoints

    def architecture(self) -> Dict[str, Any]:
        return {
            'in_channels': self.in_channels,
            'obs_size': self.obs_size,
            'feature_dim': self.config.feature_dim,
            'heads': self.config.heads,
            'conv_channels': list(self.config.conv_channels),
            'kernel_size': self.config.kernel_size,
            'stride': self.config.stride,
            'leaky_slope': self.config.leaky_slope,
            'use_gat': self.config.use_gat,
        }

    def to_checkpoint(self, config_hash: str, episode: int, obs_normalization: Dict[str, float]) -> Dict[str, Any]:
        parameters = self.state_dict()
        return {
            'format_version': __checkpoint_format__,
            'architecture': self.architecture(),
            'parameters': parameters,
            'shapes': {name: list(value.shape) for name, value in parameters.items()},
            'obs_normalization': dict(obs_normalization),
            'config_hash': config_hash,
            'episode': int(episode),
        }

    @classmethod
    def from_checkpoint(
        cls,
        state: Dict[str, Any],
        expected_hash: Optional[str] = None,
        obs_normalization: Optional[Dict[str, float]] = None,
    ) -> 'PolicyNet':
        """Rebuild a network, verifying format version, config hash and normalization."""
        version = state.get('format_version')
        if version != __checkpoint_format__:
            raise CheckpointError(
                f"Unsupported checkpoint format {version}",
                {'expected': __checkpoint_format__}
            )
        if expected_hash is not None and state.get('config_hash') != expected_hash:
            raise CheckpointError(
                "Checkpoint was trained with a different configuration",
                {'checkpoint_hash': state.get('config_hash'), 'expected_hash': expected_hash}
            )
        if obs_normalization is not None and state.get('obs_normalization') != obs_normalization:
            raise CheckpointError("Checkpoint uses a different observation normalization")

        arch = state['architecture']
        config = NetworkConfig(
            feature_dim=arch['feature_dim'],
            heads=arch['heads'],
            conv_channels=list(arch['conv_channels']),
            kernel_size=arch['kernel_size'],
            stride=arch['stride'],
            leaky_slope=arch['leaky_slope'],
            use_gat=arch['use_gat'],
        )
        net = cls(arch['in_channels'], arch['obs_size'], config)
        try:
            net.load_state_dict(state['parameters'])
        except GradientError as e:
            raise CheckpointError(f"Checkpoint parameters do not fit the network: {e}")
        return net


def action_log_probs(logits: np.ndarray) -> np.ndarray:
    """Log-softmax over the last axis, same arithmetic as the autodiff op."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def sample_actions(
    logits: np.ndarray,
    rng: np.random.Generator,
    greedy: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample one action per row of ``logits``; returns actions and their log-probabilities."""
    log_all = action_log_probs(logits)
    if greedy:
        actions = log_all.argmax(axis=-1)
    else:
        u = rng.random(log_all.shape[:-1])
        cdf = np.cumsum(np.exp(log_all), axis=-1)
        cdf[..., -1] = 1.0
        actions = (cdf > u[..., None]).argmax(axis=-1)
    log_probs = np.take_along_axis(log_all, actions[..., None], axis=-1)[..., 0]
    return actions, log_probs
