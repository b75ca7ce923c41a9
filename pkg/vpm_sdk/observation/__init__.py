"""Per-agent local map and mini-map observations."""

from .observations import Observation, make_observation, render_local, render_mini

__all__ = ['Observation', 'make_observation', 'render_local', 'render_mini']
