"""calmrelay: collective audience-reaction relay.

Audience clients stream normalized eye-gaze positions or nose-tip
velocities into a room; the server smooths and aggregates them into
anonymized heat-map, dot, or cursor-trail frames broadcast to speakers at
a fixed tick rate. A synthetic-audience simulator drives the same wire
protocol for testing and load generation.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
