"""Multi-agent actor-critic training over lossy communication channels."""

__version__ = "0.1.0"
