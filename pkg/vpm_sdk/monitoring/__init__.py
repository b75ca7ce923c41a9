"""Monitoring and metrics collection for VPM SDK."""

from .metrics import MetricsCollector

__all__ = ['MetricsCollector']
