"""Content-moderation policy simulation, coordinated link-sharing detection, and interrupted time series."""

__version__ = "0.1.0"
