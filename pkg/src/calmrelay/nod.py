"""Nose-tip velocity, per-audience cursor trails, and their composition.

A trail is a leaky-integrator cursor driven by the velocity vector: downward
velocity extends it toward the bottom, upward back to the top, and with no
input it recenters geometrically. All audiences' trails are superimposed
with symmetric horizontal offsets so synchronized nodding stacks up
visually while the display stays anonymous.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .model import V_MAX


class BadDt(ValueError):
    """Sample interval unusable (dropout or non-positive)."""

    code = "BAD_DT"


@dataclass(frozen=True)
class TrailParams:
    history_len: int = 24  # ~0.8 s of cursor positions at 30 Hz
    recenter: float = 0.90  # per-tick pull toward the rest point
    gain_x: float = 1.0
    gain_y: float = 2.5  # vertical emphasis so nodding dominates
    u_clamp: float = 0.5
    v_clamp: float = 0.5


def nose_velocity(p_prev: tuple[float, float], p_curr: tuple[float, float],
                  dt_s: float, viewport_w: float, viewport_h: float,
                  v_max: float = V_MAX) -> tuple[float, float]:
    """Pixel-space nose positions to normalized velocities (units/s).

    Raises BadDt when dt is non-positive or longer than 1 s (landmark
    dropout): such samples are discarded rather than producing a spike.
    """
    if not (0.0 < dt_s <= 1.0):
        raise BadDt(f"dt={dt_s}")
    x0, y0 = p_prev
    x1, y1 = p_curr
    if not all(math.isfinite(v) for v in (x0, y0, x1, y1)):
        raise ValueError("non-finite nose position")
    vx = (x1 - x0) / (viewport_w * dt_s)
    vy = (y1 - y0) / (viewport_h * dt_s)
    vx = min(max(vx, -v_max), v_max)
    vy = min(max(vy, -v_max), v_max)
    return vx, vy


class TrailState:
    """Leaky-integrator cursor plus its recent history polyline."""

    def __init__(self, params: TrailParams = TrailParams()):
        if not (0.0 <= params.recenter < 1.0):
            raise ValueError("recenter factor must be in [0, 1)")
        self.params = params
        self.u = 0.0
        self.v = 0.0
        self._history: deque[tuple[float, float]] = deque(
            [(0.0, 0.0)], maxlen=params.history_len
        )

    @property
    def cursor(self) -> tuple[float, float]:
        return self.u, self.v

    def polyline(self) -> list[tuple[float, float]]:
        return list(self._history)

    def advance(self, vx: float, vy: float, dt_s: float) -> tuple[float, float]:
        """One tick: integrate the velocity, recenter, clamp, record."""
        p = self.params
        u = p.recenter * self.u + p.gain_x * vx * dt_s
        v = p.recenter * self.v + p.gain_y * vy * dt_s
        u = min(max(u, -p.u_clamp), p.u_clamp)
        v = min(max(v, -p.v_clamp), p.v_clamp)
        self.u = u
        self.v = v
        self._history.append((u, v))
        return u, v


def advance_trail(state: TrailState, vx: float, vy: float,
                  dt_s: float) -> tuple[float, float]:
    return state.advance(vx, vy, dt_s)


@dataclass
class TrailFrame:
    slots: list[list[tuple[float, float]]]  # offset polylines, slot order
    spacing: float
    tick_seq: int = 0
    n_audiences: int = 0

    def payload(self) -> dict:
        return {
            "spacing": self.spacing,
            "slots": [[[u, v] for u, v in poly] for poly in self.slots],
        }

    def vertical_dominance(self) -> float:
        return vertical_dominance(self.slots)


def compose_trails(states, spacing: float, tick_seq: int = 0) -> TrailFrame:
    """Superimpose trails: slot i is shifted by (i - (n-1)/2) * spacing.

    `states` must already be in session slot order (the caller owns the
    session-seeded shuffle so slots stay unlinkable to join order).
    """
    states = list(states)
    n = len(states)
    slots = []
    for i, st in enumerate(states):
        off = (i - (n - 1) / 2.0) * spacing
        slots.append([(u + off, v) for u, v in st.polyline()])
    return TrailFrame(slots, spacing, tick_seq, n)


def vertical_dominance(slots) -> float:
    """Sum of per-slot vertical extents over horizontal extents.

    Constant per-slot offsets cancel in the extents, so layout offsets never
    count as horizontal motion. All-still is defined as 0.0; purely vertical
    motion returns inf.
    """
    total_v = 0.0
    total_h = 0.0
    for poly in slots:
        if not poly:
            continue
        us = [p[0] for p in poly]
        vs = [p[1] for p in poly]
        total_h += max(us) - min(us)
        total_v += max(vs) - min(vs)
    if total_h == 0.0:
        return 0.0 if total_v == 0.0 else math.inf
    return total_v / total_h
