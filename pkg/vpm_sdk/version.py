"""Version information for VPM SDK."""

__version__ = "0.1.0"
__version_info__ = tuple(int(x) for x in __version__.split("."))

# Build and release information
__build__ = "20261018"
__release_stage__ = "beta"  # alpha, beta, rc, stable

# Checkpoint container format; bump when parameter layout or
# observation normalization changes.
__checkpoint_format__ = 1

# Full version string
__full_version__ = f"{__version__}-{__release_stage__}.{__build__}"
