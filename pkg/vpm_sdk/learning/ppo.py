"""
Clipped PPO pieces: reward-to-go returns, rollout batches, the loss and
the Adam optimizer.

A sample is one timestep of one episode and holds all N agents, since
their forward passes are coupled through attention.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import ConfigurationError, InvalidStateError, TrainingDivergedError
from .autodiff import Tensor, log_softmax, minimum
from .network import PolicyNet


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """G(t) = sum_{tau >= t} gamma^(tau - t) r(tau)."""
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError(f"Discount factor must lie in [0, 1]: {gamma}")
    rewards = np.asarray(rewards, dtype=np.float64)
    returns = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


@dataclass
class RolloutBatch:
    """
    Stacked samples, leading axes (S, N).

    ``advantages`` are G - V unless ``normalized`` is set.
    """

    observations: np.ndarray  # (S, N, C, H, W)
    actions: np.ndarray  # (S, N) int
    log_probs: np.ndarray  # (S, N) at collection
    returns: np.ndarray  # (S, N)
    values: np.ndarray  # (S, N)
    advantages: np.ndarray  # (S, N)
    normalized: bool = False
    episode_ids: Optional[np.ndarray] = None

    @classmethod
    def from_episode(
        cls,
        observations: np.ndarray,
        actions: np.ndarray,
        log_probs: np.ndarray,
        rewards: Sequence[float],
        values: np.ndarray,
        gamma: float,
        episode_id: int = 0,
    ) -> 'RolloutBatch':
        """Shared per-step rewards are broadcast to every agent."""
        values = np.asarray(values, dtype=np.float64)
        returns = np.repeat(discounted_returns(rewards, gamma)[:, None], values.shape[1], axis=1)
        return cls(
            observations=np.asarray(observations, dtype=np.float64),
            actions=np.asarray(actions, dtype=np.int64),
            log_probs=np.asarray(log_probs, dtype=np.float64),
            returns=returns,
            values=values,
            advantages=returns - values,
            episode_ids=np.full(len(returns), episode_id),
        )

    @classmethod
    def concatenate(cls, batches: Sequence['RolloutBatch']) -> 'RolloutBatch':
        if len({b.observations.shape[1:] for b in batches}) > 1:
            raise InvalidStateError("Batches with different agent counts cannot be merged")
        return cls(
            observations=np.concatenate([b.observations for b in batches]),
            actions=np.concatenate([b.actions for b in batches]),
            log_probs=np.concatenate([b.log_probs for b in batches]),
            returns=np.concatenate([b.returns for b in batches]),
            values=np.concatenate([b.values for b in batches]),
            advantages=np.concatenate([b.advantages for b in batches]),
            normalized=all(b.normalized for b in batches),
            episode_ids=np.concatenate([
                b.episode_ids if b.episode_ids is not None else np.zeros(len(b), dtype=np.int64)
                for b in batches
            ]),
        )

    def __len__(self) -> int:
        return self.actions.shape[0]

    @property
    def n_agents(self) -> int:
        return self.actions.shape[1]

    def with_normalized_advantages(self, eps: float = 1e-8) -> 'RolloutBatch':
        advantages = (self.advantages - self.advantages.mean()) / (self.advantages.std() + eps)
        return replace(self, advantages=advantages, normalized=True)

    def subset(self, indices: np.ndarray) -> 'RolloutBatch':
        return RolloutBatch(
            observations=self.observations[indices],
            actions=self.actions[indices],
            log_probs=self.log_probs[indices],
            returns=self.returns[indices],
            values=self.values[indices],
            advantages=self.advantages[indices],
            normalized=self.normalized,
            episode_ids=None if self.episode_ids is None else self.episode_ids[indices],
        )

    def check_finite(self) -> None:
        for name in ('observations', 'log_probs', 'returns', 'values', 'advantages'):
            array = getattr(self, name)
            if not np.all(np.isfinite(array)):
                raise TrainingDivergedError(
                    f"Non-finite values in rollout batch field '{name}'",
                    details={'field': name, 'bad_count': int((~np.isfinite(array)).sum())}
                )


@dataclass
class LossTerms:
    total: Tensor
    policy: float
    value: float
    entropy: float
    clip_fraction: float
    approx_kl: float

    def as_dict(self) -> Dict[str, float]:
        return {
            'loss': float(self.total.data),
            'policy_loss': self.policy,
            'value_loss': self.value,
            'entropy': self.entropy,
            'clip_fraction': self.clip_fraction,
            'approx_kl': self.approx_kl,
        }


def clipped_surrogate(ratio: Tensor, advantages: np.ndarray, epsilon: float) -> Tensor:
    """min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A) elementwise."""
    unclipped = ratio * advantages
    clipped = ratio.clip(1.0 - epsilon, 1.0 + epsilon) * advantages
    return minimum(unclipped, clipped)


def ppo_loss(
    batch: RolloutBatch,
    epsilon: float,
    net: PolicyNet,
    value_coef: float = 0.5,
    entropy_coef: float = 0.01,
) -> LossTerms:
    """
    -mean(surrogate) + value_coef * mean((G - V)^2) - entropy_coef * entropy.

    The surrogate is averaged over agents then over samples.
    """
    if len(batch) == 0:
        raise InvalidStateError("PPO loss needs a non-empty batch")
    batch.check_finite()

    logits, values = net.forward(batch.observations)
    log_all = log_softmax(logits, axis=-1)

    S, N = batch.actions.shape
    s_idx, n_idx = np.meshgrid(np.arange(S), np.arange(N), indexing='ij')
    new_log_probs = log_all[s_idx, n_idx, batch.actions]

    ratio = (new_log_probs - batch.log_probs).exp()
    surrogate = clipped_surrogate(ratio, batch.advantages, epsilon)
    policy_loss = -surrogate.mean()

    value_error = values - batch.returns
    value_loss = (value_error * value_error).mean()

    probs = log_all.exp()
    entropy = -(probs * log_all).sum(axis=-1).mean()

    total = policy_loss + value_coef * value_loss - entropy_coef * entropy
    if not np.isfinite(total.data):
        raise TrainingDivergedError(
            "PPO loss is not finite",
            details={
                'policy_loss': float(policy_loss.data),
                'value_loss': float(value_loss.data),
                'entropy': float(entropy.data),
            }
        )

    ratio_data = ratio.data
    return LossTerms(
        total=total,
        policy=float(policy_loss.data),
        value=float(value_loss.data),
        entropy=float(entropy.data),
        clip_fraction=float(np.mean(np.abs(ratio_data - 1.0) > epsilon)),
        approx_kl=float(np.mean(batch.log_probs - new_log_probs.data)),
    )


def clip_grad_norm(parameters: Sequence[Tensor], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most ``max_norm``; returns the norm before."""
    grads = [p.grad for p in parameters if p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in parameters:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


@dataclass
class Adam:
    """Adaptive moment estimation over a fixed parameter list."""

    parameters: List[Tensor]
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _m: List[np.ndarray] = field(default_factory=list, repr=False)
    _v: List[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.parameters = list(self.parameters)
        if not self._m:
            self._m = [np.zeros_like(p.data) for p in self.parameters]
            self._v = [np.zeros_like(p.data) for p in self.parameters]

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for i, p in enumerate(self.parameters):
            if p.grad is None:
                continue
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * p.grad
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * p.grad * p.grad
            m_hat = self._m[i] / correction1
            v_hat = self._v[i] / correction2
            p.data = p.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> Dict[str, object]:
        return {
            'step_count': self.step_count,
            'm': [m.copy() for m in self._m],
            'v': [v.copy() for v in self._v],
        }

    def load_state_dict(self, state: Dict[str, object]) -> None:
        self.step_count = int(state['step_count'])
        self._m = [np.asarray(m, dtype=np.float64).copy() for m in state['m']]
        self._v = [np.asarray(v, dtype=np.float64).copy() for v in state['v']]


def minibatches(
    n_samples: int,
    minibatch_size: int,
    rng: np.random.Generator
) -> List[np.ndarray]:
    """Shuffled index blocks covering every sample once."""
    order = rng.permutation(n_samples)
    return [order[i:i + minibatch_size] for i in range(0, n_samples, minibatch_size)]


def ppo_update(
    net: PolicyNet,
    optimizer: Adam,
    batch: RolloutBatch,
    rng: np.random.Generator,
    epsilon: float = 0.2,
    epochs: int = 4,
    minibatch_size: int = 256,
    value_coef: float = 0.5,
    entropy_coef: float = 0.01,
    max_grad_norm: float = 0.5,
    normalize_advantages: bool = True,
) -> Dict[str, float]:
    """Run the PPO epochs on one batch; returns the averaged loss terms."""
    if normalize_advantages and not batch.normalized:
        batch = batch.with_normalized_advantages()

    history: List[Dict[str, float]] = []
    for _ in range(epochs):
        for indices in minibatches(len(batch), minibatch_size, rng):
            optimizer.zero_grad()
            terms = ppo_loss(batch.subset(indices), epsilon, net, value_coef, entropy_coef)
            terms.total.backward()
            grad_norm = clip_grad_norm(optimizer.parameters, max_grad_norm)
            if not np.isfinite(grad_norm):
                raise TrainingDivergedError("Gradient norm is not finite")
            optimizer.step()
            stats = terms.as_dict()
            stats['grad_norm'] = grad_norm
            history.append(stats)

    return {key: float(np.mean([h[key] for h in history])) for key in history[0]}
