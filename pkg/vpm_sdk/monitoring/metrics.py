"""
VPM SDK Metrics Collection

Counters and gauges for simulation, training and experiment runs, kept in
a private Prometheus registry so several collectors can live in one process.
"""

import json
import threading
import time
from collections import deque
from typing import Any, Deque, Dict, List, Optional

from prometheus_client import CollectorRegistry, Counter, Gauge, generate_latest

from ..core.config import MonitoringConfig
from ..utils.logging import get_logger

logger = get_logger(__name__)


class MetricsCollector:
    """
    Metrics collector for VPM SDK runs.

    Tracks episodes, simulated steps, penalties, training losses and
    checkpoint activity, with Prometheus text and JSON export.
    """

    def __init__(self, config: Optional[MonitoringConfig] = None, history: int = 10000):
        self.config = config or MonitoringConfig()
        self.start_time = time.time()
        self.registry = CollectorRegistry()
        prefix = self.config.metrics_prefix

        self._lock = threading.Lock()
        self._penalties: Deque[float] = deque(maxlen=history)
        self._losses: Deque[float] = deque(maxlen=history)

        self.episodes = Counter(
            f'{prefix}_episodes', 'Episodes run', ['policy'], registry=self.registry
        )
        self.steps = Counter(
            f'{prefix}_steps', 'Environment steps simulated', registry=self.registry
        )
        self.last_penalty = Gauge(
            f'{prefix}_episode_penalty', 'Cumulative |penalty| of the last episode',
            ['policy'], registry=self.registry
        )
        self.loss = Gauge(f'{prefix}_training_loss', 'Last PPO loss', registry=self.registry)
        self.entropy = Gauge(f'{prefix}_policy_entropy', 'Last policy entropy', registry=self.registry)
        self.updates = Counter(f'{prefix}_ppo_updates', 'PPO updates applied', registry=self.registry)
        self.checkpoints = Counter(
            f'{prefix}_checkpoints_saved', 'Checkpoints saved', registry=self.registry
        )
        self.checkpoint_errors = Counter(
            f'{prefix}_checkpoint_errors', 'Failed checkpoint saves', registry=self.registry
        )
        self.divergences = Counter(
            f'{prefix}_training_divergences', 'Training runs halted on non-finite loss',
            registry=self.registry
        )
        self.compare_failures = Counter(
            f'{prefix}_compare_failures', 'Experiment grid cells that failed',
            registry=self.registry
        )

        logger.debug("Metrics collector initialized")

    def record_episode(self, policy: str, penalty: float, steps: int) -> None:
        self.episodes.labels(policy=policy).inc()
        self.steps.inc(steps)
        self.last_penalty.labels(policy=policy).set(penalty)
        with self._lock:
            self._penalties.append(float(penalty))

    def record_update(self, stats: Dict[str, float]) -> None:
        self.updates.inc()
        self.loss.set(stats.get('loss', 0.0))
        self.entropy.set(stats.get('entropy', 0.0))
        with self._lock:
            self._losses.append(float(stats.get('loss', 0.0)))

    def record_checkpoint_saved(self, checkpoint_id: str) -> None:
        self.checkpoints.inc()
        logger.debug(f"Checkpoint save recorded: {checkpoint_id}")

    def record_checkpoint_error(self, error: str) -> None:
        self.checkpoint_errors.inc()
        logger.warning(f"Checkpoint error recorded: {error}")

    def record_divergence(self, episode: int) -> None:
        self.divergences.inc()
        logger.error(f"Training divergence recorded at episode {episode}")

    def record_compare_failure(self, cell: str, error: str) -> None:
        self.compare_failures.inc()
        logger.warning(f"Compare cell {cell} failed: {error}")

    def penalty_history(self) -> List[float]:
        with self._lock:
            return list(self._penalties)

    def get_all_metrics(self) -> Dict[str, Any]:
        """Get all current metrics as a dictionary."""
        samples: Dict[str, float] = {}
        for family in self.registry.collect():
            for sample in family.samples:
                if sample.name.endswith('_created'):
                    continue
                label = ','.join(f"{k}={v}" for k, v in sorted(sample.labels.items()))
                key = f"{sample.name}{{{label}}}" if label else sample.name
                samples[key] = sample.value

        with self._lock:
            penalties = list(self._penalties)
            losses = list(self._losses)

        return {
            'uptime_seconds': time.time() - self.start_time,
            'metrics': samples,
            'computed': {
                'mean_episode_penalty': sum(penalties) / len(penalties) if penalties else 0.0,
                'mean_loss': sum(losses) / len(losses) if losses else 0.0,
                'episodes_recorded': len(penalties),
            },
        }

    def export_prometheus_metrics(self) -> str:
        """Export metrics in Prometheus text format."""
        return generate_latest(self.registry).decode('utf-8')

    def export_json_metrics(self) -> str:
        return json.dumps(self.get_all_metrics(), indent=2, sort_keys=True)
