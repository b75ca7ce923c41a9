"""
VPM SDK Configuration Management

This module handles configuration for the VPM SDK, supporting multiple
configuration sources including environment variables, YAML files, and
programmatic configuration.
"""

import hashlib
import json
import os
import yaml
from dataclasses import dataclass, field, asdict, is_dataclass
from typing import Optional, Dict, Any, List, Union
from pathlib import Path

from .models import ObservationMode, PolicyKind
from .exceptions import ConfigurationError


@dataclass
class EnvironmentConfig:
    """Configuration for the monitored grid world."""

    map: str = "open_50"  # bundled map name or path to a map file
    n_agents: int = 4
    fov: int = 25  # side length L of the square field of view
    decay_rate: float = 1.0
    r_max: float = 400.0
    steps: int = 1000
    coverage_mode: bool = False
    random_starts: bool = False  # ignore 'A' cells in the map file


@dataclass
class ObservationConfig:
    """Configuration for per-agent observations."""

    mode: str = ObservationMode.BOTH.value
    obs_size: int = 25  # local map and mini-map side length
    dump_dir: Optional[str] = None  # default for `vpm-sdk run --dump-obs`


@dataclass
class PlannerConfig:
    """Configuration for the non-learning baselines."""

    d_min: float = 12.0  # GCS candidate suppression radius


@dataclass
class NetworkConfig:
    """Configuration for the CNN + GAT actor-critic network."""

    feature_dim: int = 128
    heads: int = 3
    conv_channels: List[int] = field(default_factory=lambda: [8, 16])
    kernel_size: int = 3
    stride: int = 2
    leaky_slope: float = 0.2
    use_gat: bool = True


@dataclass
class PPOConfig:
    """Configuration for the clipped PPO update."""

    gamma: float = 0.99
    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 256
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True
    reward_scale: Optional[float] = None  # None: 1 / (free cells * r_max)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class TrainingConfig:
    """Configuration for the training loop."""

    episodes: int = 30000
    episodes_per_update: int = 1
    checkpoint_interval: int = 100  # episodes between checkpoints
    seed: int = 0
    log_csv: Optional[str] = "training_log.csv"
    rolling_window: int = 500
    run_name: str = "vpm"
    workers: int = 1  # processes collecting the episodes of one update


@dataclass
class ExperimentConfig:
    """Configuration for the policy comparison grid."""

    policies: List[str] = field(default_factory=lambda: ["random", "gcs", "tspc"])
    maps: List[str] = field(default_factory=lambda: ["open_20"])
    n_agents: List[int] = field(default_factory=lambda: [2])
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    steps: int = 500
    out_csv: Optional[str] = "compare.csv"
    workers: int = 1
    greedy: bool = False  # argmax instead of sampling for learned policies
    period_threshold: float = 0.8  # minimum autocorrelation for detect_period


@dataclass
class StateConfig:
    """Configuration for checkpoint storage."""

    backend: str = "local"  # only local disk is supported
    directory: str = "./checkpoints"
    max_checkpoints: int = 10
    compression_enabled: bool = True


@dataclass
class MonitoringConfig:
    """Configuration for logging and metrics."""

    enable_metrics: bool = True
    log_level: str = "INFO"
    structured_logging: bool = False
    log_file: Optional[str] = None
    metrics_prefix: str = "vpm_sdk"


_SECTIONS = {
    'environment': EnvironmentConfig,
    'observation': ObservationConfig,
    'planner': PlannerConfig,
    'network': NetworkConfig,
    'ppo': PPOConfig,
    'training': TrainingConfig,
    'experiment': ExperimentConfig,
    'state': StateConfig,
    'monitoring': MonitoringConfig,
}


@dataclass
class VPMConfig:
    """Main VPM SDK configuration."""

    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    state: StateConfig = field(default_factory=StateConfig)
    monitoring: MonitoringConfig = field(default_factory=MonitoringConfig)

    # Environment variables override
    env_prefix: str = "VPM_SDK"

    def __post_init__(self):
        """Post-initialization processing."""
        # Load environment variables
        self._load_env_vars()

        # Validate configuration
        self._validate()

    @classmethod
    def from_yaml(cls, config_path: Union[str, Path]) -> 'VPMConfig':
        """Load configuration from YAML file."""
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigurationError(f"Config file not found: {config_path}")

        try:
            with open(config_path, 'r') as f:
                config_data = yaml.safe_load(f) or {}

            # Extract vpm_sdk section if it exists
            if 'vpm_sdk' in config_data:
                config_data = config_data['vpm_sdk'] or {}

            return cls.from_dict(config_data)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML configuration: {e}")

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]) -> 'VPMConfig':
        """
        Create configuration from dictionary.

        Nested sections and flat dotted keys (``ppo.gamma: 0.95``) may be mixed.
        """
        nested: Dict[str, Dict[str, Any]] = {}
        top_level: Dict[str, Any] = {}
        for key, value in config_dict.items():
            if '.' in key:
                section, name = key.split('.', 1)
                nested.setdefault(section, {})[name] = value
            elif key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigurationError(f"Section '{key}' must be a mapping")
                nested.setdefault(key, {}).update(value)
            else:
                top_level[key] = value

        try:
            kwargs = dict(top_level)
            for section, values in nested.items():
                if section not in _SECTIONS:
                    raise ConfigurationError(f"Unknown configuration section: {section}")
                kwargs[section] = _SECTIONS[section](**values)
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigurationError(f"Invalid configuration format: {e}")

    @classmethod
    def from_env(cls, prefix: str = "VPM_SDK") -> 'VPMConfig':
        """Load configuration from environment variables."""
        config = cls()
        config.env_prefix = prefix
        config._load_env_vars()
        config._validate()
        return config

    def _load_env_vars(self) -> None:
        """Load configuration from environment variables."""
        prefix = self.env_prefix

        # Environment settings
        self.environment.map = os.getenv(f"{prefix}_MAP", self.environment.map)
        self.environment.n_agents = int(os.getenv(
            f"{prefix}_AGENTS", self.environment.n_agents
        ))
        self.environment.fov = int(os.getenv(f"{prefix}_FOV", self.environment.fov))

        # Training settings
        self.training.seed = int(os.getenv(f"{prefix}_SEED", self.training.seed))
        self.training.episodes = int(os.getenv(
            f"{prefix}_EPISODES", self.training.episodes
        ))

        # State settings
        self.state.directory = os.getenv(
            f"{prefix}_CHECKPOINT_DIR", self.state.directory
        )

        # Monitoring settings
        self.monitoring.log_level = os.getenv(
            f"{prefix}_LOG_LEVEL", self.monitoring.log_level
        )
        self.monitoring.structured_logging = os.getenv(
            f"{prefix}_STRUCTURED_LOGGING",
            str(self.monitoring.structured_logging)
        ).lower() == 'true'
        self.monitoring.log_file = os.getenv(f"{prefix}_LOG_FILE", self.monitoring.log_file)

    def _validate(self) -> None:
        """Validate configuration settings."""
        env = self.environment
        if env.fov < 1 or env.fov % 2 == 0:
            raise ConfigurationError(f"Field of view must be odd and positive: {env.fov}")
        if env.decay_rate < 0:
            raise ConfigurationError("Decay rate must be non-negative")
        if env.r_max <= 0:
            raise ConfigurationError("Maximum penalty must be positive")
        if env.n_agents < 1:
            raise ConfigurationError("At least one agent is required")
        if env.steps < 0:
            raise ConfigurationError("Episode length must be non-negative")

        try:
            ObservationMode(self.observation.mode)
        except ValueError:
            raise ConfigurationError(f"Unsupported observation mode: {self.observation.mode}")
        if self.observation.obs_size < 1 or self.observation.obs_size % 2 == 0:
            raise ConfigurationError(
                f"Observation size must be odd and positive: {self.observation.obs_size}"
            )

        if self.planner.d_min <= 0:
            raise ConfigurationError("GCS suppression distance must be positive")

        net = self.network
        if net.feature_dim <= 0 or net.heads <= 0:
            raise ConfigurationError("Feature width and head count must be positive")
        if not net.conv_channels or any(c <= 0 for c in net.conv_channels):
            raise ConfigurationError("Convolution channel counts must be positive")

        ppo = self.ppo
        if not 0.0 <= ppo.gamma <= 1.0:
            raise ConfigurationError(f"Discount factor must lie in [0, 1]: {ppo.gamma}")
        if ppo.clip_epsilon <= 0:
            raise ConfigurationError("Clip epsilon must be positive")
        if ppo.learning_rate < 0:
            raise ConfigurationError("Learning rate must be non-negative")
        if ppo.epochs < 1 or ppo.minibatch_size < 1:
            raise ConfigurationError("PPO epochs and minibatch size must be positive")

        if self.state.backend != "local":
            raise ConfigurationError(f"Unsupported checkpoint backend: {self.state.backend}")

        if self.training.episodes_per_update < 1:
            raise ConfigurationError("Episodes per update must be positive")
        if self.training.checkpoint_interval <= 0:
            raise ConfigurationError("Checkpoint interval must be positive")
        if self.training.rolling_window < 1:
            raise ConfigurationError("Rolling window must be positive")
        if self.training.workers < 1:
            raise ConfigurationError("Worker count must be positive")

        for policy in self.experiment.policies:
            kind = policy.split(':', 1)[0]
            try:
                PolicyKind(kind)
            except ValueError:
                raise ConfigurationError(f"Unsupported policy: {policy}")
        if self.experiment.workers < 1:
            raise ConfigurationError("Worker count must be positive")
        if not 0.0 < self.experiment.period_threshold <= 1.0:
            raise ConfigurationError("Period threshold must lie in (0, 1]")

    def validate(self) -> None:
        """Re-check every section after programmatic changes."""
        self._validate()

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary."""
        return asdict(self)

    def to_yaml(self, file_path: Optional[Union[str, Path]] = None) -> str:
        """Convert configuration to YAML string or file."""
        data = self.to_dict()
        data.pop('env_prefix', None)
        yaml_str = yaml.safe_dump({'vpm_sdk': data}, default_flow_style=False, indent=2)

        if file_path:
            with open(file_path, 'w') as f:
                f.write(yaml_str)

        return yaml_str

    def config_hash(self) -> str:
        """Hash of every setting a trained network depends on."""
        relevant = {
            'r_max': self.environment.r_max,
            'fov': self.environment.fov,
            'observation': {
                'mode': self.observation.mode,
                'obs_size': self.observation.obs_size,
            },
            'network': asdict(self.network),
        }
        canonical = json.dumps(relevant, sort_keys=True)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def update_from_dict(self, updates: Dict[str, Any]) -> None:
        """Update configuration from dictionary."""
        for key, value in updates.items():
            if key in _SECTIONS and isinstance(value, dict):
                section = getattr(self, key)
                for name, item in value.items():
                    if hasattr(section, name):
                        setattr(section, name, item)
            elif '.' in key:
                # Handle nested keys like 'ppo.gamma'
                parts = key.split('.')
                obj = self
                for part in parts[:-1]:
                    if hasattr(obj, part):
                        obj = getattr(obj, part)
                    else:
                        break
                else:
                    if hasattr(obj, parts[-1]):
                        setattr(obj, parts[-1], value)
            elif hasattr(self, key) and not is_dataclass(getattr(self, key)):
                setattr(self, key, value)


def load_config(
    config_path: Optional[Union[str, Path]] = None,
    env_prefix: str = "VPM_SDK"
) -> VPMConfig:
    """
    Load configuration from multiple sources with precedence.

    Precedence order (highest to lowest):
    1. Environment variables
    2. YAML configuration file
    3. Default values

    Args:
        config_path: Path to YAML configuration file
        env_prefix: Prefix for environment variables

    Returns:
        Loaded and validated VPMConfig instance
    """
    # Start with defaults
    config = VPMConfig()

    # Load from YAML file if provided
    if config_path:
        yaml_config = VPMConfig.from_yaml(config_path)
        config.update_from_dict(yaml_config.to_dict())

    # Override with environment variables
    config.env_prefix = env_prefix
    config._load_env_vars()

    # Final validation
    config._validate()

    return config

