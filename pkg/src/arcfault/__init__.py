"""Spectral DC arc-fault detection toolkit.

Synthetic PV current generation, a log-spectral band feature pipeline, a
compact trainable 1-D CNN with a consecutive-frame alarm counter,
cross-hardware transfer adaptation, a two-stage evolutionary update
engine, and a deterministic cloud/fleet simulation with canary rollout.
"""

__version__ = "0.1.0"
