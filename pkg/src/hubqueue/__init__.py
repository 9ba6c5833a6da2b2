"""Congestion-aware p-hub median location with state-dependent service queues."""

__version__ = "0.1.0"
