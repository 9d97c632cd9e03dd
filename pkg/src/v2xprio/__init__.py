"""Distraction-prioritized NR-V2X sidelink access simulator."""

__version__ = "0.1.0"
