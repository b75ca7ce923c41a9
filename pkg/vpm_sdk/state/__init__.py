"""Checkpoint storage."""

from .local_backend import CheckpointInfo, LocalCheckpointManager

__all__ = ['CheckpointInfo', 'LocalCheckpointManager']
