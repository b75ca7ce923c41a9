"""Autodiff engine, graph-attention actor-critic and PPO training."""

from .network import PolicyNet
from .ppo import Adam, RolloutBatch, discounted_returns, ppo_loss
from .trainer import NetPolicy, TrainingResult, train

__all__ = [
    'PolicyNet',
    'Adam',
    'RolloutBatch',
    'discounted_returns',
    'ppo_loss',
    'NetPolicy',
    'TrainingResult',
    'train',
]
