"""Utility modules for VPM SDK."""

from .logging import get_logger, setup_logging

__all__ = ['get_logger', 'setup_logging']
