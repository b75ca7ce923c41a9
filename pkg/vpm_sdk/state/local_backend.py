"""
Local Filesystem Checkpoint Backend

Stores network checkpoints as (optionally gzip-compressed) pickles with a
JSON metadata sidecar.
"""

import gzip
import json
import pickle
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..core.config import StateConfig
from ..core.exceptions import CheckpointError
from ..utils.logging import get_logger

logger = get_logger(__name__)

CHECKPOINT_SUFFIX = ".pkl"
METADATA_SUFFIX = ".meta"
_GZIP_MAGIC = b"\x1f\x8b"


@dataclass
class CheckpointInfo:
    """Information about a stored checkpoint."""
    checkpoint_id: str
    timestamp: datetime
    size_bytes: int
    location: str
    metadata: Dict[str, Any] = field(default_factory=dict)
    sdk_version: Optional[str] = None


def _decode(serialized_data: bytes) -> Dict[str, Any]:
    if serialized_data[:2] == _GZIP_MAGIC:
        serialized_data = gzip.decompress(serialized_data)
    checkpoint_data = pickle.loads(serialized_data)
    return checkpoint_data.get('state', checkpoint_data)


class LocalCheckpointManager:
    """
    Local filesystem-based checkpoint manager.

    Features:
    - Optional compression
    - Metadata sidecar per checkpoint
    - Retention of the newest ``max_checkpoints``
    """

    def __init__(self, config: Optional[StateConfig] = None):
        self.config = config or StateConfig()
        self.checkpoint_dir = Path(self.config.directory)
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Local checkpoint manager initialized: {self.checkpoint_dir}")

    def path_for(self, checkpoint_id: str) -> Path:
        return self.checkpoint_dir / f"{checkpoint_id}{CHECKPOINT_SUFFIX}"

    def save_checkpoint(self, state: Dict[str, Any], checkpoint_id: str) -> bool:
        """
        Save checkpoint to local filesystem.

        Args:
            state: Checkpoint container to save
            checkpoint_id: Unique identifier for the checkpoint

        Returns:
            True if checkpoint was saved successfully
        """
        try:
            checkpoint_data = {
                'checkpoint_id': checkpoint_id,
                'timestamp': datetime.now().isoformat(),
                'sdk_version': self._get_sdk_version(),
                'state': state,
            }

            serialized_data = pickle.dumps(checkpoint_data, protocol=pickle.HIGHEST_PROTOCOL)
            if self.config.compression_enabled:
                # mtime=0 keeps identical checkpoints byte-identical
                serialized_data = gzip.compress(serialized_data, mtime=0)

            checkpoint_file = self.path_for(checkpoint_id)
            with open(checkpoint_file, 'wb') as f:
                f.write(serialized_data)

            metadata = {
                'checkpoint_id': checkpoint_id,
                'timestamp': checkpoint_data['timestamp'],
                'size_bytes': len(serialized_data),
                'compressed': self.config.compression_enabled,
                'sdk_version': self._get_sdk_version(),
                'episode': state.get('episode'),
                'config_hash': state.get('config_hash'),
            }
            with open(self.checkpoint_dir / f"{checkpoint_id}{METADATA_SUFFIX}", 'w') as f:
                json.dump(metadata, f, indent=2)

            logger.info(f"Checkpoint saved locally: {checkpoint_file}")

            if self.config.max_checkpoints > 0:
                self._cleanup_old_checkpoints()

            return True

        except (OSError, pickle.PicklingError) as e:
            logger.error(f"Failed to save checkpoint locally: {e}")
            return False

    def load_checkpoint(self, checkpoint_id: str) -> Optional[Dict[str, Any]]:
        """
        Load checkpoint from local filesystem.

        Returns:
            Loaded checkpoint container or None if not found
        """
        checkpoint_file = self.path_for(checkpoint_id)
        if not checkpoint_file.exists():
            logger.warning(f"Checkpoint file not found: {checkpoint_file}")
            return None
        return self.load_checkpoint_file(checkpoint_file)

    def load_checkpoint_file(self, path: Union[str, Path]) -> Dict[str, Any]:
        """Load a checkpoint from an explicit path; raises CheckpointError on failure."""
        path = Path(path)
        try:
            with open(path, 'rb') as f:
                state = _decode(f.read())
        except FileNotFoundError:
            raise CheckpointError(f"Checkpoint file not found: {path}")
        except (OSError, EOFError, pickle.UnpicklingError) as e:
            raise CheckpointError(f"Failed to read checkpoint {path}: {e}")
        logger.info(f"Checkpoint loaded locally: {path}")
        return state

    def list_checkpoints(self) -> List[CheckpointInfo]:
        """List checkpoints, newest first."""
        checkpoints = []
        for checkpoint_file in self.checkpoint_dir.glob(f"*{CHECKPOINT_SUFFIX}"):
            checkpoint_id = checkpoint_file.stem
            stat = checkpoint_file.stat()
            metadata_file = self.checkpoint_dir / f"{checkpoint_id}{METADATA_SUFFIX}"
            metadata: Dict[str, Any] = {}
            timestamp = datetime.fromtimestamp(stat.st_mtime)
            if metadata_file.exists():
                try:
                    with open(metadata_file, 'r') as f:
                        metadata = json.load(f)
                    timestamp = datetime.fromisoformat(metadata.get('timestamp', timestamp.isoformat()))
                except (OSError, ValueError) as e:
                    logger.warning(f"Failed to read metadata for {checkpoint_id}: {e}")
                    metadata = {'error': str(e)}

            checkpoints.append(CheckpointInfo(
                checkpoint_id=checkpoint_id,
                timestamp=timestamp,
                size_bytes=metadata.get('size_bytes', stat.st_size),
                location=str(checkpoint_file),
                metadata=metadata,
                sdk_version=metadata.get('sdk_version'),
            ))

        checkpoints.sort(key=lambda x: (x.timestamp, x.checkpoint_id), reverse=True)
        logger.debug(f"Found {len(checkpoints)} checkpoints locally")
        return checkpoints

    def latest_checkpoint(self) -> Optional[CheckpointInfo]:
        checkpoints = self.list_checkpoints()
        return checkpoints[0] if checkpoints else None

    def delete_checkpoint(self, checkpoint_id: str) -> bool:
        """Delete a checkpoint and its metadata; True if the checkpoint existed."""
        checkpoint_file = self.path_for(checkpoint_id)
        metadata_file = self.checkpoint_dir / f"{checkpoint_id}{METADATA_SUFFIX}"

        deleted = False
        if checkpoint_file.exists():
            checkpoint_file.unlink()
            deleted = True
        if metadata_file.exists():
            metadata_file.unlink()

        if deleted:
            logger.info(f"Checkpoint deleted locally: {checkpoint_id}")
        else:
            logger.warning(f"Checkpoint not found for deletion: {checkpoint_id}")
        return deleted

    def _cleanup_old_checkpoints(self) -> None:
        """Clean up old checkpoints based on max_checkpoints configuration."""
        checkpoints = self.list_checkpoints()
        if len(checkpoints) <= self.config.max_checkpoints:
            return

        checkpoints_to_delete = checkpoints[self.config.max_checkpoints:]
        for checkpoint in checkpoints_to_delete:
            self.delete_checkpoint(checkpoint.checkpoint_id)
        logger.info(f"Cleaned up {len(checkpoints_to_delete)} old checkpoints")

    def _get_sdk_version(self) -> str:
        from ..version import __version__
        return __version__
